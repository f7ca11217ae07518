#ifndef LTP_SENDER_H_
#define LTP_SENDER_H_

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <variant>
#include <vector>

#include "ltp/congestion.h"
#include "ltp/events.h"
#include "ltp/segmentation.h"
#include "ltp/time.h"
#include "ltp/wire.h"

namespace ltp {

struct SenderConfig {
  CongestionConfig congestion;
  // Seeds the random insertion position of the retransmission queue.
  uint64_t seed = 0;
  Duration min_rto = std::chrono::microseconds(200);
};

struct NothingToSend {};
struct Paced {
  Duration wait;
};
// The in-flight cap is reached; the next ACK (or a timer) unblocks the flow.
struct CwndLimited {
  Duration hint;
};

using Emission = std::variant<Packet, NothingToSend, Paced, CwndLimited>;

struct FlowSendStats {
  uint64_t transmissions = 0;
  uint64_t data_transmissions = 0;
  uint64_t retransmissions = 0;
  uint64_t losses_declared = 0;
  uint64_t timeouts = 0;
  uint64_t cancelled_retransmissions = 0;
  uint64_t discarded_on_stop = 0;
  uint64_t acks = 0;
  uint64_t duplicate_acks = 0;
};

// Send side of one flow.
//
// Three queues order emissions: the critical queue (CQ, FIFO, reliable),
// the normal queue (NQ, FIFO, each packet sent once) and the retransmission
// queue (RQ, random-in first-out) holding normal packets declared lost. CQ
// always drains before NQ and NQ before RQ. A packet is declared lost once
// three packets sent after it (in actual transmission order) have been
// acknowledged. Critical packets lost go back to CQ, normal ones to RQ.
class FlowSender {
 public:
  FlowSender(uint16_t flow_id, std::shared_ptr<const std::vector<uint8_t>> data,
             Segmentation layout, SenderConfig config = {});

  FlowSender(const FlowSender&) = delete;
  FlowSender& operator=(const FlowSender&) = delete;
  FlowSender(FlowSender&&) = default;
  FlowSender& operator=(FlowSender&&) = default;

  Emission NextPacket(Instant now);

  // Processes an ACK and returns the sequence ids it caused to be declared
  // lost. Throws LtpError(kUnknownSeq) if `seq` was never sent.
  std::vector<uint32_t> OnAck(uint32_t seq, Instant now);

  // Receiver-side End ("stop"): normal packets are discarded, critical
  // packets are still delivered.
  void OnStop();

  // Earliest time after `now` at which a timer or the pacer needs
  // NextPacket to be called again.
  std::optional<Instant> NextWakeup(Instant now) const;

  bool complete() const;
  bool stopped() const { return stopped_; }
  bool registration_acked() const;
  bool all_data_acked() const { return data_acked_ == layout_.segments.size(); }
  Instant first_send_time() const { return first_send_time_; }

  uint16_t flow_id() const { return flow_id_; }
  const Segmentation& layout() const { return layout_; }
  const BdpController& congestion() const { return cc_; }
  const FlowSendStats& stats() const { return stats_; }

  const std::deque<uint32_t>& critical_queue() const { return cq_; }
  const std::deque<uint32_t>& normal_queue() const { return nq_; }
  const std::deque<uint32_t>& retransmission_queue() const { return rq_; }
  const std::vector<uint32_t>& sent_log() const { return sent_log_; }

  bool acked(uint32_t seq) const;
  bool declared_lost(uint32_t seq) const;
  // Number of ACKed packets sent after the latest transmission of `seq`,
  // saturated at the loss threshold.
  int later_acked_count(uint32_t seq) const;
  // Every critical packet emitted so far has been acknowledged.
  bool all_emitted_critical_acked() const;

  void set_event_sink(EventSink* sink) { sink_ = sink; }

  static constexpr int kLossThreshold = 3;

 private:
  static constexpr uint32_t kNeverSent = 0xFFFFFFFF;
  static constexpr int kMaxRtoBackoff = 6;

  enum class Where : uint8_t { kNone, kCq, kNq, kRq };

  struct SeqState {
    uint32_t last_send_pos = kNeverSent;
    Instant last_send_time;
    uint32_t transmissions = 0;
    bool critical = false;
    bool acked = false;
    bool outstanding = false;
    bool declared_lost = false;
    Where where = Where::kNone;
  };

  size_t IndexOf(uint32_t seq) const;
  uint32_t SeqOf(size_t index) const;
  SeqState& StateOf(uint32_t seq) { return states_[IndexOf(seq)]; }
  const SeqState& StateOf(uint32_t seq) const { return states_[IndexOf(seq)]; }

  void ProcessTimers(Instant now);
  void DeclareLost(uint32_t seq, Instant now, bool by_timeout);
  void Requeue(uint32_t seq);
  void RemoveFromQueue(uint32_t seq);
  bool EndReady() const;
  Duration Rto() const;
  Packet BuildPacket(uint32_t seq) const;
  size_t QueuedCount() const;

  uint16_t flow_id_;
  std::shared_ptr<const std::vector<uint8_t>> data_;
  Segmentation layout_;
  SenderConfig config_;
  BdpController cc_;
  std::mt19937_64 rng_;

  std::vector<SeqState> states_;  // data seqs, then registration, then End
  std::deque<uint32_t> cq_;
  std::deque<uint32_t> nq_;
  std::deque<uint32_t> rq_;
  std::vector<uint32_t> sent_log_;
  std::set<uint32_t> outstanding_data_positions_;

  // Largest sent_log positions among ACKed packets, descending. The third
  // entry bounds which earlier packets have three later ACKs.
  std::vector<uint32_t> top_acked_positions_;
  uint32_t loss_scan_cursor_ = 0;

  size_t critical_total_ = 0;
  size_t critical_acked_ = 0;
  size_t data_acked_ = 0;
  bool end_emitted_ = false;
  bool end_wanted_ = false;
  bool stopped_ = false;
  Instant first_send_time_ = Instant::max();
  Instant last_progress_ = Instant::min();
  int rto_backoff_ = 0;
  Instant next_send_time_ = Instant::min();

  FlowSendStats stats_;
  EventSink* sink_ = nullptr;
};

}  // namespace ltp

#endif  // LTP_SENDER_H_
