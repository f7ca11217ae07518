#include "ltp/session.h"

#include <algorithm>
#include <cstring>
#include <limits>

#include "ltp/error.h"
#include "ltp/segmentation.h"

namespace ltp {
namespace {

constexpr uint16_t kBroadcastBit = 0x8000;
constexpr Duration kBroadcastLinger = std::chrono::milliseconds(5);

Endpoint* const* One(Endpoint** ep) { return ep; }

// Open-ended; receivers clamp it to the registered length.
std::vector<ByteRange> AllBytes() {
  return {ByteRange{0, std::numeric_limits<size_t>::max()}};
}

std::vector<ByteRange> AllBytes(size_t n) { return {ByteRange{0, n}}; }

std::vector<uint8_t> ToBytes(std::span<const float> values) {
  std::vector<uint8_t> out(values.size_bytes());
  if (!out.empty()) std::memcpy(out.data(), values.data(), out.size());
  return out;
}

void CheckOptions(const SessionOptions& o) {
  if (!(o.pct_threshold > 0.0 && o.pct_threshold <= 1.0)) {
    throw LtpError(ErrorCode::kConfig, "pct_threshold: must be within (0, 1]");
  }
  if (o.timeout <= Duration::zero()) {
    throw LtpError(ErrorCode::kConfig, "timeout: must be positive");
  }
}

}  // namespace

uint16_t GatherFlowId(uint64_t round, size_t rank) {
  return static_cast<uint16_t>(((round % 128) << 8) | (rank & 0xFF));
}

uint16_t BroadcastFlowId(uint64_t round, size_t rank) {
  return static_cast<uint16_t>(kBroadcastBit | GatherFlowId(round, rank));
}

PsSession::PsSession(size_t n_workers, const std::string& host,
                     uint16_t port, SessionOptions options)
    : n_workers_(n_workers),
      options_(options),
      channel_(UdpOptions{options.loss_rate, options.seed}),
      endpoint_(SyncCluster::kPsNode, &channel_),
      thresholds_(ProfileConstant(options.profile)),
      link_initialized_(n_workers, false) {
  CheckOptions(options_);
  if (n_workers_ == 0 || n_workers_ > kMaxSessionWorkers) {
    throw LtpError(ErrorCode::kConfig, "workers: must be within [1, 256]");
  }
  port_ = channel_.BindLocal(SyncCluster::kPsNode, host, port);
  endpoint_.set_receive_policy([this](NodeId peer, uint16_t flow_id) {
    return PolicyFor(peer, flow_id);
  });
}

ReceiveParams PsSession::PolicyFor(NodeId peer, uint16_t flow_id) {
  ReceiveParams p;
  p.critical_ranges = AllBytes();
  const size_t rank = flow_id & 0xFF;
  if ((flow_id & kBroadcastBit) || rank >= n_workers_ ||
      flow_id != GatherFlowId(gather_round_, rank)) {
    return p;
  }
  peers_by_rank_[rank] = peer;
  if (options_.mode != SyncMode::kLossTolerant) return p;

  if (!link_initialized_[rank]) {
    Duration rtprop = options_.congestion.initial_rtprop;
    double btlbw = options_.congestion.initial_btlbw_bps;
    if (auto echo = endpoint_.LastEcho(peer)) {
      rtprop = DequantizeRtprop(echo->rtprop_q);
      btlbw = DequantizeBtlbw(echo->btlbw_q);
    }
    thresholds_.InitLink(static_cast<uint32_t>(rank),
                         InitLtThreshold(rtprop, expected_bytes_, btlbw));
    link_initialized_[rank] = true;
  }
  p.critical_ranges = EdgeRanges(expected_bytes_, options_.critical_edge_bytes);
  p.lt_threshold = thresholds_.lt(static_cast<uint32_t>(rank));
  p.deadline = thresholds_.deadline();
  p.pct_threshold = options_.pct_threshold;
  return p;
}

std::vector<float> PsSession::Gather(size_t elements) {
  if (elements == 0) {
    throw LtpError(ErrorCode::kInvalidArgument, "gather of an empty array");
  }
  expected_bytes_ = elements * sizeof(float);
  if (!epoch_started_) {
    std::fill(link_initialized_.begin(), link_initialized_.end(), false);
    epoch_started_ = true;
  }
  const uint64_t round = gather_round_;
  std::map<size_t, NodeId> previous_peers = peers_by_rank_;
  peers_by_rank_.clear();

  auto closed = [&](size_t rank) {
    auto it = peers_by_rank_.find(rank);
    if (it == peers_by_rank_.end()) return false;
    FlowReceiver* r = endpoint_.receiver(it->second, GatherFlowId(round, rank));
    return r && r->closed();
  };
  auto done = [&] {
    for (size_t rank = 0; rank < n_workers_; ++rank) {
      if (!closed(rank)) return false;
    }
    return true;
  };
  Endpoint* ep = &endpoint_;
  const Instant give_up = SaturatingAdd(channel_.Now(), options_.timeout);
  if (!RunUntil(channel_, std::span<Endpoint* const>(One(&ep), 1), done,
                give_up)) {
    size_t missing = 0;
    for (size_t rank = 0; rank < n_workers_; ++rank) missing += !closed(rank);
    if (peers_by_rank_.empty()) peers_by_rank_ = previous_peers;
    throw LtpError(ErrorCode::kWorkerUnreachable,
                   std::to_string(missing) + " of " +
                       std::to_string(n_workers_) +
                       " workers did not complete gather round " +
                       std::to_string(round));
  }

  std::vector<GradientBuffer> buffers;
  last_flows_.clear();
  std::string mismatch;
  for (size_t rank = 0; rank < n_workers_; ++rank) {
    const NodeId peer = peers_by_rank_.at(rank);
    const uint16_t fid = GatherFlowId(round, rank);
    FlowReceiver& r = *endpoint_.receiver(peer, fid);
    if (r.total_bytes() != expected_bytes_) {
      mismatch = "worker " + std::to_string(rank) + " sent " +
                 std::to_string(r.total_bytes()) + " bytes, expected " +
                 std::to_string(expected_bytes_);
    } else {
      buffers.push_back(GradientBuffer::FromBytes(r.Reassemble()));
    }
    FlowRecord f;
    f.phase = Phase::kGather;
    f.batch = round;
    f.worker = rank;
    f.flow_id = fid;
    f.elapsed = r.close_time() - r.start_time();
    f.fct = f.elapsed;
    f.reason = r.close_reason();
    f.received_fraction = r.received_fraction();
    f.total_segments = r.total_segments();
    f.received_segments = r.received_segments();
    f.lt_threshold = r.params().lt_threshold;
    f.deadline = r.params().deadline;
    last_flows_.push_back(f);
    if (options_.mode == SyncMode::kLossTolerant &&
        r.close_reason() == CloseReason::kAllReceived &&
        link_initialized_[rank]) {
      thresholds_.UpdateLtThreshold(static_cast<uint32_t>(rank), f.elapsed);
    }
    endpoint_.RemoveReceiver(peer, fid);
  }
  ++gather_round_;
  if (!mismatch.empty()) throw LtpError(ErrorCode::kInvalidArgument, mismatch);
  return Aggregate(buffers).values;
}

void PsSession::Broadcast(std::span<const float> values) {
  if (peers_by_rank_.size() != n_workers_) {
    throw LtpError(ErrorCode::kRoleError,
                   "broadcast needs a completed gather to know the workers");
  }
  if (values.empty()) {
    throw LtpError(ErrorCode::kInvalidArgument, "broadcast of an empty array");
  }
  auto data = std::make_shared<const std::vector<uint8_t>>(ToBytes(values));
  const Segmentation layout = SegmentBuffer(*data, sizeof(float), AllBytes(data->size()));
  const uint64_t round = broadcast_round_++;
  std::vector<FlowKey> keys;
  for (const auto& [rank, peer] : peers_by_rank_) {
    SenderConfig config;
    config.congestion = options_.congestion;
    config.seed = MixSeed(options_.seed, BroadcastFlowId(round, rank));
    endpoint_.StartFlow(peer, BroadcastFlowId(round, rank), data, layout,
                        config);
    keys.push_back(FlowKey{peer, BroadcastFlowId(round, rank)});
  }
  // Every byte acknowledged is delivery; waiting for the End handshake too
  // would hang on a worker that already returned.
  auto done = [&] {
    for (const FlowKey& k : keys) {
      const FlowSender& s = *endpoint_.sender(k.peer, k.flow_id);
      if (!s.complete() && !(s.registration_acked() && s.all_data_acked())) {
        return false;
      }
    }
    return true;
  };
  Endpoint* ep = &endpoint_;
  const bool ok = RunUntil(channel_, std::span<Endpoint* const>(One(&ep), 1),
                           done, SaturatingAdd(channel_.Now(),
                                               options_.timeout));
  for (const FlowKey& k : keys) endpoint_.RemoveSender(k.peer, k.flow_id);
  if (!ok) {
    throw LtpError(ErrorCode::kWorkerUnreachable,
                   "broadcast round " + std::to_string(round) +
                       " did not complete");
  }
}

WorkerSession::WorkerSession(const std::string& ps_host, uint16_t ps_port,
                             size_t rank, SessionOptions options)
    : rank_(rank),
      options_(options),
      channel_(UdpOptions{options.loss_rate, MixSeed(options.seed, rank)}),
      endpoint_(kLocal, &channel_) {
  CheckOptions(options_);
  if (rank_ >= kMaxSessionWorkers) {
    throw LtpError(ErrorCode::kConfig, "rank: must be below 256");
  }
  channel_.BindLocal(kLocal, "0.0.0.0", 0);
  channel_.AddPeer(kPs, ps_host, ps_port);
  endpoint_.set_receive_policy([](NodeId, uint16_t) {
    ReceiveParams p;
    p.critical_ranges = AllBytes();
    return p;
  });
}

void WorkerSession::Gather(std::span<const float> gradients) {
  if (gradients.empty()) {
    throw LtpError(ErrorCode::kInvalidArgument, "gather of an empty array");
  }
  auto data = std::make_shared<const std::vector<uint8_t>>(ToBytes(gradients));
  const std::vector<ByteRange> critical =
      options_.mode == SyncMode::kLossTolerant
          ? EdgeRanges(data->size(), options_.critical_edge_bytes)
          : AllBytes(data->size());
  Segmentation layout = SegmentBuffer(*data, sizeof(float), critical);
  const uint16_t fid = GatherFlowId(gather_round_++, rank_);
  SenderConfig config;
  config.congestion = options_.congestion;
  config.seed = MixSeed(options_.seed, fid);
  FlowSender& sender =
      endpoint_.StartFlow(kPs, fid, data, std::move(layout), config);
  Endpoint* ep = &endpoint_;
  const bool ok = RunUntil(
      channel_, std::span<Endpoint* const>(One(&ep), 1),
      [&] { return sender.complete(); },
      SaturatingAdd(channel_.Now(), options_.timeout));
  const bool registered = sender.registration_acked();
  endpoint_.RemoveSender(kPs, fid);
  if (!ok) {
    throw LtpError(ErrorCode::kWorkerUnreachable,
                   registered ? "parameter server stopped acknowledging"
                              : "parameter server never acknowledged "
                                "registration");
  }
}

std::vector<float> WorkerSession::ReceiveBroadcast() {
  const uint16_t fid = BroadcastFlowId(broadcast_round_, rank_);
  auto received = [&] {
    FlowReceiver* r = endpoint_.receiver(kPs, fid);
    return r && r->closed();
  };
  Endpoint* ep = &endpoint_;
  if (!RunUntil(channel_, std::span<Endpoint* const>(One(&ep), 1), received,
                SaturatingAdd(channel_.Now(), options_.timeout))) {
    throw LtpError(ErrorCode::kWorkerUnreachable,
                   "no broadcast from the parameter server");
  }
  ++broadcast_round_;
  FlowReceiver& r = *endpoint_.receiver(kPs, fid);
  // Linger so that the End gets acknowledged and the remaining stops go
  // out; the parameter server does not depend on it.
  RunUntil(channel_, std::span<Endpoint* const>(One(&ep), 1),
           [&] { return r.end_received(); },
           SaturatingAdd(r.close_time(), kBroadcastLinger));
  std::vector<float> out = GradientBuffer::FromBytes(r.Reassemble()).values;
  endpoint_.RemoveReceiver(kPs, fid);
  return out;
}

}  // namespace ltp
