#include "ltp/sync.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "ltp/error.h"
#include "ltp/segmentation.h"

namespace ltp {
namespace {

Duration MulSaturating(Duration d, int64_t k) {
  if (d.count() > Duration::max().count() / k) return kInfiniteDuration;
  return d * k;
}

}  // namespace

std::string_view SyncModeName(SyncMode mode) {
  return mode == SyncMode::kLossTolerant ? "loss_tolerant" : "reliable";
}

std::string_view PhaseName(Phase phase) {
  return phase == Phase::kGather ? "gather" : "broadcast";
}

uint64_t MixSeed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void ValidateSyncPlan(const SyncPlan& p) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw LtpError(ErrorCode::kConfig, field + ": " + why);
  };
  if (p.n_workers == 0) fail("workers", "must be at least 1");
  if (p.n_workers >= 0xFFFF) fail("workers", "too many");
  if (p.element_size != 4) fail("element_size", "gradients are float32 (4)");
  if (p.model_bytes == 0) fail("model_bytes", "must be positive");
  if (p.model_bytes % p.element_size != 0) {
    fail("model_bytes", "must be a multiple of the element size");
  }
  const size_t max_seg = p.sender.congestion.max_segment_bytes;
  if (max_seg < p.element_size || max_seg > kMaxSegmentBytes) {
    fail("max_segment_bytes", "must be within [element_size, 1460]");
  }
  const size_t seg = AlignedSegmentLength(p.element_size, max_seg);
  if ((p.model_bytes + seg - 1) / seg > kMaxSegmentsPerFlow) {
    fail("model_bytes", "too large for one flow");
  }
  if (p.epochs == 0) fail("epochs", "must be at least 1");
  if (p.batches_per_epoch == 0) fail("batches", "must be at least 1");
  if (!(p.pct_threshold > 0.0 && p.pct_threshold <= 1.0)) {
    fail("pct_threshold", "must be within (0, 1]");
  }
  if (!(p.sender.congestion.initial_btlbw_bps > 0.0)) {
    fail("initial_btlbw_bps", "must be positive");
  }
}

GradientBuffer GradientBuffer::FromBytes(std::span<const uint8_t> bytes) {
  if (bytes.size() % sizeof(float) != 0) {
    throw LtpError(ErrorCode::kInvalidArgument,
                   "byte length not a multiple of 4");
  }
  GradientBuffer out;
  out.values.resize(bytes.size() / sizeof(float));
  if (!bytes.empty()) std::memcpy(out.values.data(), bytes.data(), bytes.size());
  return out;
}

GradientBuffer GradientWorkload::Generate(size_t epoch, size_t batch,
                                          size_t worker,
                                          size_t elements) const {
  // Marsaglia polar method over a splitmix64 stream: portable across
  // standard library implementations and cheap for multi-megabyte buffers.
  uint64_t state = MixSeed(MixSeed(MixSeed(seed_, epoch), batch), worker);
  auto next_signed = [&state] {
    state += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return static_cast<float>(z >> 40) * 0x1.0p-23f - 1.0f;  // [-1, 1)
  };
  GradientBuffer out;
  out.values.resize(elements);
  float* dst = out.values.data();
  for (size_t i = 0; i < elements; i += 2) {
    float u, v, s;
    do {
      u = next_signed();
      v = next_signed();
      s = u * u + v * v;
    } while (s >= 1.0f || s == 0.0f);
    const float f = std::sqrt(-2.0f * std::log(s) / s);
    dst[i] = u * f;
    if (i + 1 < elements) dst[i + 1] = v * f;
  }
  return out;
}

GradientBuffer Aggregate(std::span<const GradientBuffer> reassembled) {
  if (reassembled.empty()) {
    throw LtpError(ErrorCode::kInvalidArgument, "no buffers to aggregate");
  }
  const size_t n = reassembled[0].values.size();
  GradientBuffer out;
  out.values.assign(n, 0.0f);
  for (const GradientBuffer& b : reassembled) {
    if (b.values.size() != n) {
      throw LtpError(ErrorCode::kInvalidArgument, "buffer lengths differ");
    }
    for (size_t i = 0; i < n; ++i) out.values[i] += b.values[i];
  }
  const float count = static_cast<float>(reassembled.size());
  for (float& v : out.values) v /= count;
  return out;
}

Duration MetricsReport::MeanBst() const {
  if (batches.empty()) return Duration::zero();
  Duration sum{};
  for (const BatchRecord& b : batches) sum += b.bst();
  return sum / static_cast<int64_t>(batches.size());
}

Duration MetricsReport::MaxBst() const {
  Duration best{};
  for (const BatchRecord& b : batches) best = std::max(best, b.bst());
  return best;
}

double MetricsReport::ThroughputProxyBps() const {
  const double bst = ToSeconds(MeanBst());
  if (bst <= 0.0) return 0.0;
  return static_cast<double>(model_bytes) * 8.0 *
         static_cast<double>(n_workers) / bst;
}

double MetricsReport::MeanReceivedFraction(Phase phase) const {
  double sum = 0.0;
  size_t count = 0;
  for (const FlowRecord& f : flows) {
    if (f.phase != phase) continue;
    sum += f.received_fraction;
    ++count;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

std::map<CloseReason, size_t> MetricsReport::CloseHistogram(
    Phase phase) const {
  std::map<CloseReason, size_t> out;
  for (const FlowRecord& f : flows) {
    if (f.phase == phase) ++out[f.reason];
  }
  return out;
}

uint64_t MetricsReport::TotalRetransmissions(Phase phase) const {
  uint64_t sum = 0;
  for (const FlowRecord& f : flows) {
    if (f.phase == phase) sum += f.send_stats.retransmissions;
  }
  return sum;
}

SyncCluster::SyncCluster(SyncPlan plan, Channel* channel)
    : plan_(std::move(plan)),
      channel_(channel),
      thresholds_(ProfileConstant(plan_.profile)),
      link_initialized_(plan_.n_workers, false),
      expected_at_worker_(plan_.n_workers) {
  ValidateSyncPlan(plan_);
  endpoints_.push_back(std::make_unique<Endpoint>(kPsNode, channel_));
  for (size_t w = 0; w < plan_.n_workers; ++w) {
    endpoints_.push_back(std::make_unique<Endpoint>(WorkerNode(w), channel_));
  }
  for (auto& ep : endpoints_) endpoint_ptrs_.push_back(ep.get());

  ps().set_receive_policy([this](NodeId peer, uint16_t flow_id) {
    auto it = expected_at_ps_.find(FlowKey{peer, flow_id});
    return it == expected_at_ps_.end() ? ReceiveParams{} : it->second;
  });
  for (size_t w = 0; w < plan_.n_workers; ++w) {
    worker(w).set_receive_policy([this, w](NodeId, uint16_t flow_id) {
      auto it = expected_at_worker_[w].find(flow_id);
      return it == expected_at_worker_[w].end() ? ReceiveParams{}
                                                : it->second;
    });
  }
}

void SyncCluster::set_event_sink(EventSink* sink) {
  for (auto& ep : endpoints_) ep->set_event_sink(sink);
}

void SyncCluster::StartEpoch() {
  const CongestionConfig& cc = plan_.sender.congestion;
  for (size_t w = 0; w < plan_.n_workers; ++w) {
    Duration rtprop = cc.initial_rtprop;
    double btlbw = cc.initial_btlbw_bps;
    if (auto echo = ps().LastEcho(WorkerNode(w))) {
      rtprop = DequantizeRtprop(echo->rtprop_q);
      btlbw = DequantizeBtlbw(echo->btlbw_q);
    }
    thresholds_.InitLink(static_cast<uint32_t>(w),
                         InitLtThreshold(rtprop, plan_.model_bytes, btlbw));
    link_initialized_[w] = true;
  }
}

Duration SyncCluster::UnreachableAfter() const {
  return MulSaturating(thresholds_.deadline(), 10);
}

uint16_t SyncCluster::NextFlowId() { return next_flow_id_++; }

std::vector<ByteRange> SyncCluster::CriticalRanges(bool gather) const {
  if (gather && plan_.mode == SyncMode::kLossTolerant) {
    return EdgeRanges(plan_.model_bytes, plan_.critical_edge_bytes);
  }
  return {ByteRange{0, plan_.model_bytes}};
}

ReceiveParams SyncCluster::ParamsFor(bool gather, size_t worker) const {
  ReceiveParams p;
  p.element_size = plan_.element_size;
  p.critical_ranges = CriticalRanges(gather);
  if (gather && plan_.mode == SyncMode::kLossTolerant) {
    p.lt_threshold = thresholds_.lt(static_cast<uint32_t>(worker));
    p.deadline = thresholds_.deadline();
    p.pct_threshold = plan_.pct_threshold;
  }
  return p;
}

SenderConfig SyncCluster::SenderConfigFor(uint16_t flow_id,
                                          size_t worker) const {
  SenderConfig c = plan_.sender;
  c.seed = MixSeed(MixSeed(plan_.seed, flow_id), worker);
  return c;
}

void SyncCluster::Drive(
    Instant round_start,
    const std::vector<std::pair<Endpoint*, FlowKey>>& senders,
    const std::vector<std::pair<Endpoint*, FlowKey>>& receivers) {
  const Duration unreachable = UnreachableAfter();
  std::string unreachable_diag;
  auto done = [&] {
    bool all = true;
    for (const auto& [ep, key] : receivers) {
      FlowReceiver* r = ep->receiver(key.peer, key.flow_id);
      if (!r || !r->closed()) {
        all = false;
        break;
      }
    }
    if (all) {
      for (const auto& [ep, key] : senders) {
        if (!ep->sender(key.peer, key.flow_id)->complete()) {
          all = false;
          break;
        }
      }
    }
    if (all) return true;
    if (channel_->Now() - round_start >= unreachable) {
      for (const auto& [ep, key] : senders) {
        if (!ep->sender(key.peer, key.flow_id)->registration_acked()) {
          unreachable_diag = "node " + std::to_string(key.peer) +
                             " never acknowledged registration of flow " +
                             std::to_string(key.flow_id) + " from node " +
                             std::to_string(ep->id());
          return true;
        }
      }
    }
    return false;
  };
  const Instant give_up =
      SaturatingAdd(round_start, MulSaturating(unreachable, 100));
  const bool ok = RunUntil(*channel_, endpoint_ptrs_, done, give_up);
  if (!unreachable_diag.empty()) {
    throw LtpError(ErrorCode::kWorkerUnreachable, unreachable_diag);
  }
  if (!ok) {
    throw LtpError(ErrorCode::kWorkerUnreachable,
                   "round made no progress before giving up");
  }
}

namespace {

FlowRecord RecordFor(const FlowReceiver& r, const FlowSender& s,
                     Instant round_start) {
  FlowRecord f;
  f.flow_id = r.flow_id();
  f.fct = r.close_time() - round_start;
  f.elapsed = r.close_time() - r.start_time();
  f.reason = r.close_reason();
  f.received_fraction = r.received_fraction();
  f.total_segments = r.total_segments();
  f.received_segments = r.received_segments();
  f.lt_threshold = r.params().lt_threshold;
  f.deadline = r.params().deadline;
  f.send_stats = s.stats();
  return f;
}

}  // namespace

GatherResult SyncCluster::GatherRound(
    std::span<const GradientBuffer> workers) {
  if (workers.size() != plan_.n_workers) {
    throw LtpError(ErrorCode::kInvalidArgument,
                   "expected " + std::to_string(plan_.n_workers) +
                       " worker buffers, got " +
                       std::to_string(workers.size()));
  }
  for (const GradientBuffer& b : workers) {
    if (b.size_bytes() != plan_.model_bytes) {
      throw LtpError(ErrorCode::kInvalidArgument,
                     "worker buffer of " + std::to_string(b.size_bytes()) +
                         " bytes, plan says " +
                         std::to_string(plan_.model_bytes));
    }
  }
  if (std::find(link_initialized_.begin(), link_initialized_.end(), false) !=
      link_initialized_.end()) {
    StartEpoch();
  }

  const Instant round_start = channel_->Now();
  const std::vector<ByteRange> critical = CriticalRanges(true);
  std::vector<uint16_t> ids(plan_.n_workers);
  std::vector<std::pair<Endpoint*, FlowKey>> senders, receivers;
  for (size_t w = 0; w < plan_.n_workers; ++w) {
    ids[w] = NextFlowId();
    const FlowKey at_ps{WorkerNode(w), ids[w]};
    expected_at_ps_[at_ps] = ParamsFor(true, w);
    auto data = std::make_shared<const std::vector<uint8_t>>(
        workers[w].bytes().begin(), workers[w].bytes().end());
    Segmentation layout =
        SegmentBuffer(*data, plan_.element_size, critical,
                    plan_.sender.congestion.max_segment_bytes);
    worker(w).StartFlow(kPsNode, ids[w], data, std::move(layout),
                        SenderConfigFor(ids[w], w));
    senders.emplace_back(&worker(w), FlowKey{kPsNode, ids[w]});
    receivers.emplace_back(&ps(), at_ps);
  }

  Drive(round_start, senders, receivers);

  GatherResult out;
  for (size_t w = 0; w < plan_.n_workers; ++w) {
    const FlowReceiver& r = *ps().receiver(WorkerNode(w), ids[w]);
    const FlowSender& s = *worker(w).sender(kPsNode, ids[w]);
    FlowRecord f = RecordFor(r, s, round_start);
    f.epoch = epoch_;
    f.batch = batch_;
    f.phase = Phase::kGather;
    f.worker = w;
    out.duration = std::max(out.duration, f.fct);
    out.flows.push_back(f);
    out.reassembled.push_back(GradientBuffer::FromBytes(r.Reassemble()));
    out.missing_segments.push_back(r.missing_segments());
    if (r.close_reason() == CloseReason::kAllReceived) {
      thresholds_.UpdateLtThreshold(static_cast<uint32_t>(w), f.elapsed);
    }
    ps().RemoveReceiver(WorkerNode(w), ids[w]);
    worker(w).RemoveSender(kPsNode, ids[w]);
    expected_at_ps_.erase(FlowKey{WorkerNode(w), ids[w]});
  }
  out.aggregate = Aggregate(out.reassembled);
  return out;
}

BroadcastResult SyncCluster::BroadcastRound(const GradientBuffer& aggregate) {
  if (aggregate.size_bytes() != plan_.model_bytes) {
    throw LtpError(ErrorCode::kInvalidArgument,
                   "aggregate of " + std::to_string(aggregate.size_bytes()) +
                       " bytes, plan says " +
                       std::to_string(plan_.model_bytes));
  }
  if (std::find(link_initialized_.begin(), link_initialized_.end(), false) !=
      link_initialized_.end()) {
    StartEpoch();
  }
  const Instant round_start = channel_->Now();
  auto data = std::make_shared<const std::vector<uint8_t>>(
      aggregate.bytes().begin(), aggregate.bytes().end());
  const std::vector<ByteRange> critical = CriticalRanges(false);
  const Segmentation layout =
      SegmentBuffer(*data, plan_.element_size, critical,
                    plan_.sender.congestion.max_segment_bytes);

  std::vector<uint16_t> ids(plan_.n_workers);
  std::vector<std::pair<Endpoint*, FlowKey>> senders, receivers;
  for (size_t w = 0; w < plan_.n_workers; ++w) {
    ids[w] = NextFlowId();
    expected_at_worker_[w][ids[w]] = ParamsFor(false, w);
    ps().StartFlow(WorkerNode(w), ids[w], data, layout,
                   SenderConfigFor(ids[w], w));
    senders.emplace_back(&ps(), FlowKey{WorkerNode(w), ids[w]});
    receivers.emplace_back(&worker(w), FlowKey{kPsNode, ids[w]});
  }

  Drive(round_start, senders, receivers);

  BroadcastResult out;
  for (size_t w = 0; w < plan_.n_workers; ++w) {
    const FlowReceiver& r = *worker(w).receiver(kPsNode, ids[w]);
    const FlowSender& s = *ps().sender(WorkerNode(w), ids[w]);
    FlowRecord f = RecordFor(r, s, round_start);
    f.epoch = epoch_;
    f.batch = batch_;
    f.phase = Phase::kBroadcast;
    f.worker = w;
    out.duration = std::max(out.duration, f.fct);
    out.flows.push_back(f);
    out.received.push_back(GradientBuffer::FromBytes(r.Reassemble()));
    worker(w).RemoveReceiver(kPsNode, ids[w]);
    ps().RemoveSender(WorkerNode(w), ids[w]);
    expected_at_worker_[w].erase(ids[w]);
  }
  return out;
}

MetricsReport RunTrainingSim(const SyncPlan& plan,
                             const GradientWorkload& workload,
                             Channel* channel, EventSink* sink) {
  SyncCluster cluster(plan, channel);
  cluster.set_event_sink(sink);
  MetricsReport report;
  report.mode = plan.mode;
  report.n_workers = plan.n_workers;
  report.model_bytes = plan.model_bytes;
  const size_t elements = plan.model_bytes / plan.element_size;
  for (size_t e = 0; e < plan.epochs; ++e) {
    cluster.StartEpoch();
    for (size_t b = 0; b < plan.batches_per_epoch; ++b) {
      cluster.set_labels(e, b);
      std::vector<GradientBuffer> grads;
      grads.reserve(plan.n_workers);
      for (size_t w = 0; w < plan.n_workers; ++w) {
        grads.push_back(workload.Generate(e, b, w, elements));
      }
      GatherResult g = cluster.GatherRound(grads);
      BroadcastResult bc = cluster.BroadcastRound(g.aggregate);
      for (const GradientBuffer& got : bc.received) {
        if (got.values.size() != g.aggregate.values.size() ||
            std::memcmp(got.values.data(), g.aggregate.values.data(),
                        g.aggregate.size_bytes()) != 0) {
          throw LtpError(ErrorCode::kMalformedPacket,
                         "broadcast delivered a corrupted buffer");
        }
      }
      report.batches.push_back(BatchRecord{e, b, g.duration, bc.duration});
      report.flows.insert(report.flows.end(), g.flows.begin(),
                          g.flows.end());
      report.flows.insert(report.flows.end(), bc.flows.begin(),
                          bc.flows.end());
    }
  }
  return report;
}

}  // namespace ltp
