#ifndef LTP_SESSION_H_
#define LTP_SESSION_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ltp/endpoint.h"
#include "ltp/lt_threshold.h"
#include "ltp/sync.h"
#include "ltp/udp_channel.h"

namespace ltp {

struct SessionOptions {
  NetworkProfile profile = NetworkProfile::kDcn;
  double pct_threshold = 0.8;
  SyncMode mode = SyncMode::kLossTolerant;
  size_t critical_edge_bytes = 64;
  // Injected loss on this process's outgoing datagrams.
  double loss_rate = 0.0;
  uint64_t seed = 1;
  Duration timeout = std::chrono::seconds(30);
  CongestionConfig congestion;
};

// Flow ids carry the round and the worker rank so that both ends agree on
// them without a handshake; ranks are limited to kMaxSessionWorkers.
inline constexpr size_t kMaxSessionWorkers = 256;
uint16_t GatherFlowId(uint64_t round, size_t rank);
uint16_t BroadcastFlowId(uint64_t round, size_t rank);

// Parameter-server side of a live UDP gather/broadcast session. Calls block
// and must not overlap.
class PsSession {
 public:
  // Throws LtpError(kConfig) or LtpError(kIo).
  PsSession(size_t n_workers, const std::string& host = "127.0.0.1",
            uint16_t port = 0, SessionOptions options = {});

  uint16_t port() const { return port_; }
  size_t n_workers() const { return n_workers_; }

  // Waits for one gradient flow per worker rank, each `elements` floats,
  // and returns their mean with missing data counted as zeros.
  // Throws LtpError(kInvalidArgument) when a worker sends another length
  // and LtpError(kWorkerUnreachable) on timeout.
  std::vector<float> Gather(size_t elements);

  // Reliably sends `values` to every worker seen in the last gather.
  // Throws LtpError(kRoleError) before any gather.
  void Broadcast(std::span<const float> values);

  // Re-derives LT thresholds from fresh header echoes at the next gather.
  void StartEpoch() { epoch_started_ = false; }

  const std::vector<FlowRecord>& last_flows() const { return last_flows_; }

 private:
  ReceiveParams PolicyFor(NodeId peer, uint16_t flow_id);

  size_t n_workers_;
  SessionOptions options_;
  UdpChannel channel_;
  uint16_t port_ = 0;
  Endpoint endpoint_;
  LtThresholds thresholds_;
  bool epoch_started_ = false;
  std::vector<bool> link_initialized_;
  std::map<size_t, NodeId> peers_by_rank_;
  size_t expected_bytes_ = 0;
  uint64_t gather_round_ = 0;
  uint64_t broadcast_round_ = 0;
  std::vector<FlowRecord> last_flows_;
};

// Worker side. Calls block and must not overlap.
class WorkerSession {
 public:
  WorkerSession(const std::string& ps_host, uint16_t ps_port, size_t rank,
                SessionOptions options = {});

  size_t rank() const { return rank_; }

  // Sends one gradient flow to the PS and returns once the PS released it.
  // Throws LtpError(kInvalidArgument) for an empty array before sending.
  void Gather(std::span<const float> gradients);

  // Waits for the PS broadcast of this round.
  std::vector<float> ReceiveBroadcast();

 private:
  static constexpr NodeId kLocal = 1;
  static constexpr NodeId kPs = 0;

  size_t rank_;
  SessionOptions options_;
  UdpChannel channel_;
  Endpoint endpoint_;
  uint64_t gather_round_ = 0;
  uint64_t broadcast_round_ = 0;
};

}  // namespace ltp

#endif  // LTP_SESSION_H_
