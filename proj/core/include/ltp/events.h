#ifndef LTP_EVENTS_H_
#define LTP_EVENTS_H_

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "ltp/time.h"
#include "ltp/wire.h"

namespace ltp {

enum class CloseReason { kAllReceived, kEarlyClosed, kDeadlineForced };

std::string_view CloseReasonName(CloseReason reason);

struct SendRecord {
  Instant at;
  uint16_t flow_id = 0;
  uint32_t seq = 0;
  PacketType type = PacketType::kData;
  bool retransmission = false;
  size_t inflight_before = 0;
  size_t bdp_packets = 0;
};

struct LossRecord {
  Instant at;
  uint16_t flow_id = 0;
  uint32_t seq = 0;
  bool critical = false;
  bool by_timeout = false;
  size_t bdp_before = 0;
  size_t bdp_after = 0;
  Duration rtprop_before{};
  Duration rtprop_after{};
  double btlbw_before = 0;
  double btlbw_after = 0;
};

struct CloseRecord {
  Instant at;
  uint32_t peer = 0;
  uint16_t flow_id = 0;
  CloseReason reason = CloseReason::kAllReceived;
  Duration elapsed{};
  double received_fraction = 0;
  Duration lt_threshold{};
  Duration deadline{};
  double pct_threshold = 1.0;
  size_t critical_pending = 0;
};

// Observer hooks for protocol state machines. Default implementations
// ignore everything.
class EventSink {
 public:
  virtual ~EventSink() = default;
  virtual void OnSend(const SendRecord&) {}
  virtual void OnLoss(const LossRecord&) {}
  virtual void OnClose(const CloseRecord&) {}
};

// Collects every event in memory for later replay.
class EventLog : public EventSink {
 public:
  void OnSend(const SendRecord& r) override { sends.push_back(r); }
  void OnLoss(const LossRecord& r) override { losses.push_back(r); }
  void OnClose(const CloseRecord& r) override { closes.push_back(r); }

  void Clear() {
    sends.clear();
    losses.clear();
    closes.clear();
  }

  std::vector<SendRecord> sends;
  std::vector<LossRecord> losses;
  std::vector<CloseRecord> closes;
};

inline std::string_view CloseReasonName(CloseReason reason) {
  switch (reason) {
    case CloseReason::kAllReceived: return "AllReceived";
    case CloseReason::kEarlyClosed: return "EarlyClosed";
    case CloseReason::kDeadlineForced: return "DeadlineForced";
  }
  return "Unknown";
}

}  // namespace ltp

#endif  // LTP_EVENTS_H_
