#ifndef LTP_SYNC_H_
#define LTP_SYNC_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "ltp/channel.h"
#include "ltp/endpoint.h"
#include "ltp/events.h"
#include "ltp/lt_threshold.h"
#include "ltp/sender.h"

namespace ltp {

enum class SyncMode {
  kLossTolerant,
  // Same protocol with every packet Critical, pct_threshold 1.0 and no
  // deadline: the in-library stand-in for a fully reliable transport.
  kReliable,
};

std::string_view SyncModeName(SyncMode mode);

struct SyncPlan {
  size_t n_workers = 8;
  size_t model_bytes = 8u << 20;
  size_t element_size = 4;
  size_t epochs = 1;
  size_t batches_per_epoch = 20;
  NetworkProfile profile = NetworkProfile::kDcn;
  double pct_threshold = 0.8;
  SyncMode mode = SyncMode::kLossTolerant;
  // Bytes at each end of a gradient buffer that are always delivered.
  size_t critical_edge_bytes = 64;
  SenderConfig sender;
  uint64_t seed = 1;
};

// Throws LtpError(kConfig) naming the offending field.
void ValidateSyncPlan(const SyncPlan& plan);

struct GradientBuffer {
  std::vector<float> values;

  size_t size_bytes() const { return values.size() * sizeof(float); }
  std::span<const uint8_t> bytes() const {
    return {reinterpret_cast<const uint8_t*>(values.data()), size_bytes()};
  }
  // Throws LtpError(kInvalidArgument) unless the length is a multiple of 4.
  static GradientBuffer FromBytes(std::span<const uint8_t> bytes);
};

// Seeded normal gradients; the values of (epoch, batch, worker) do not
// depend on what else was generated.
class GradientWorkload {
 public:
  explicit GradientWorkload(uint64_t seed) : seed_(seed) {}
  GradientBuffer Generate(size_t epoch, size_t batch, size_t worker,
                          size_t elements) const;

 private:
  uint64_t seed_;
};

// Element-wise mean with missing data already zeroed, summed in ascending
// worker order. Throws LtpError(kInvalidArgument) on length mismatch.
GradientBuffer Aggregate(std::span<const GradientBuffer> reassembled);

enum class Phase { kGather, kBroadcast };
std::string_view PhaseName(Phase phase);

struct FlowRecord {
  size_t epoch = 0;
  size_t batch = 0;
  Phase phase = Phase::kGather;
  size_t worker = 0;
  uint16_t flow_id = 0;
  // Round start to receiver close.
  Duration fct{};
  // Receiver's first packet to receiver close.
  Duration elapsed{};
  CloseReason reason = CloseReason::kAllReceived;
  double received_fraction = 0.0;
  size_t total_segments = 0;
  size_t received_segments = 0;
  Duration lt_threshold = kInfiniteDuration;
  Duration deadline = kInfiniteDuration;
  FlowSendStats send_stats;
};

struct BatchRecord {
  size_t epoch = 0;
  size_t batch = 0;
  Duration gather{};
  Duration broadcast{};

  Duration bst() const { return gather + broadcast; }
};

struct MetricsReport {
  double loss_rate = 0.0;
  SyncMode mode = SyncMode::kLossTolerant;
  size_t n_workers = 0;
  size_t model_bytes = 0;
  std::vector<BatchRecord> batches;
  std::vector<FlowRecord> flows;

  Duration MeanBst() const;
  Duration MaxBst() const;
  // model_bytes * n_workers per mean BST, in bits per second.
  double ThroughputProxyBps() const;
  double MeanReceivedFraction(Phase phase) const;
  std::map<CloseReason, size_t> CloseHistogram(Phase phase) const;
  uint64_t TotalRetransmissions(Phase phase) const;
};

struct GatherResult {
  GradientBuffer aggregate;
  std::vector<GradientBuffer> reassembled;
  // Per worker, the data segments that never arrived.
  std::vector<std::vector<uint32_t>> missing_segments;
  std::vector<FlowRecord> flows;
  Duration duration{};
};

struct BroadcastResult {
  std::vector<GradientBuffer> received;
  std::vector<FlowRecord> flows;
  Duration duration{};
};

// One parameter server (node 0) and n workers (nodes 1..n) on a channel,
// all driven from the calling thread.
class SyncCluster {
 public:
  static constexpr NodeId kPsNode = 0;
  static NodeId WorkerNode(size_t worker) {
    return static_cast<NodeId>(worker + 1);
  }

  SyncCluster(SyncPlan plan, Channel* channel);

  const SyncPlan& plan() const { return plan_; }
  void set_event_sink(EventSink* sink);
  void set_labels(size_t epoch, size_t batch) {
    epoch_ = epoch;
    batch_ = batch;
  }

  // Re-derives every link's LT threshold from the estimates last echoed by
  // that worker, or from the local defaults when none were seen.
  void StartEpoch();

  // Throws LtpError(kInvalidArgument) for a wrong worker count or buffer
  // length, LtpError(kWorkerUnreachable) when a registration stays
  // unacknowledged for 10 deadlines.
  GatherResult GatherRound(std::span<const GradientBuffer> workers);
  BroadcastResult BroadcastRound(const GradientBuffer& aggregate);

  const LtThresholds& thresholds() const { return thresholds_; }
  Endpoint& ps() { return *endpoints_[0]; }
  Endpoint& worker(size_t w) { return *endpoints_[w + 1]; }

 private:
  Duration UnreachableAfter() const;
  uint16_t NextFlowId();
  std::vector<ByteRange> CriticalRanges(bool gather) const;
  ReceiveParams ParamsFor(bool gather, size_t worker) const;
  SenderConfig SenderConfigFor(uint16_t flow_id, size_t worker) const;
  // Runs until every receiver in `receivers` closed and every sender
  // completed.
  void Drive(Instant round_start,
             const std::vector<std::pair<Endpoint*, FlowKey>>& senders,
             const std::vector<std::pair<Endpoint*, FlowKey>>& receivers);

  SyncPlan plan_;
  Channel* channel_;
  std::vector<std::unique_ptr<Endpoint>> endpoints_;
  std::vector<Endpoint*> endpoint_ptrs_;
  LtThresholds thresholds_;
  std::vector<bool> link_initialized_;
  std::map<FlowKey, ReceiveParams> expected_at_ps_;
  std::vector<std::map<uint16_t, ReceiveParams>> expected_at_worker_;
  uint16_t next_flow_id_ = 0;
  size_t epoch_ = 0;
  size_t batch_ = 0;
};

// Every (epoch, batch): generate gradients, gather, broadcast, record.
MetricsReport RunTrainingSim(const SyncPlan& plan,
                             const GradientWorkload& workload,
                             Channel* channel, EventSink* sink = nullptr);

// Mixes two values into an independent 64-bit seed (splitmix64 finalizer).
uint64_t MixSeed(uint64_t a, uint64_t b);

}  // namespace ltp

#endif  // LTP_SYNC_H_
