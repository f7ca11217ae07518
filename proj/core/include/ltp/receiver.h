#ifndef LTP_RECEIVER_H_
#define LTP_RECEIVER_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "ltp/events.h"
#include "ltp/segmentation.h"
#include "ltp/time.h"
#include "ltp/wire.h"

namespace ltp {

struct ReceiveParams {
  // Below the LT threshold the receiver waits for every segment; between it
  // and the deadline it closes once pct_threshold of the bytes and every
  // critical segment are in; past the deadline it closes as soon as every
  // critical segment is in.
  Duration lt_threshold = kInfiniteDuration;
  Duration deadline = kInfiniteDuration;
  double pct_threshold = 1.0;

  // Byte ranges the sender marks Critical and the element size it segments
  // with; together they tell the receiver which segments it must not waive.
  std::vector<ByteRange> critical_ranges;
  size_t element_size = 4;

  // Spacing of the repeated stop message when the echoed RTprop is unknown.
  Duration default_stop_spacing = std::chrono::milliseconds(1);
  int stop_repeats = 3;
  size_t max_buffered_before_registration = 64;
};

struct CloseDecision {
  bool closed = false;
  CloseReason reason = CloseReason::kAllReceived;
};

// Receive side of one flow: per-packet ACKs, the Early Close double
// threshold and bubble-filling reassembly.
class FlowReceiver {
 public:
  FlowReceiver(uint32_t peer, uint16_t flow_id, ReceiveParams params);

  // Every Registration, Data and End packet is answered with an Ack echoing
  // its flow and sequence id, including packets for a closed flow. Data
  // arriving before the registration is buffered; past the buffer limit it
  // throws LtpError(kUnknownFlow). A Data payload whose length contradicts
  // the flow layout throws LtpError(kMalformedPacket).
  Packet OnPacket(const Packet& packet, Instant now);

  CloseDecision PollClose(Instant now);

  // Stop messages (receiver-side End) due by `now`.
  std::vector<Packet> TakeStops(Instant now);

  // Next instant at which PollClose or TakeStops may change its answer
  // without a packet arriving.
  std::optional<Instant> NextWakeup(Instant now) const;

  // total_bytes long; segments never received are zeros.
  std::vector<uint8_t> Reassemble() const;

  uint32_t peer() const { return peer_; }
  uint16_t flow_id() const { return flow_id_; }
  bool registered() const { return registered_; }
  bool closed() const { return closed_; }
  // The sender's End arrived: it has nothing more to send.
  bool end_received() const { return end_received_; }
  CloseReason close_reason() const { return close_reason_; }
  Instant start_time() const { return start_time_; }
  Instant close_time() const { return close_time_; }
  const ReceiveParams& params() const { return params_; }

  uint32_t total_segments() const { return registration_.total_segments; }
  size_t total_bytes() const { return registration_.total_bytes; }
  size_t received_bytes() const { return received_bytes_; }
  size_t received_segments() const { return received_segments_; }
  double received_fraction() const;
  size_t critical_pending() const { return critical_pending_; }
  std::optional<size_t> segment_length() const;
  bool segment_received(uint32_t seq) const;
  std::vector<uint32_t> missing_segments() const;

  uint16_t last_rtprop_echo() const { return last_rtprop_q_; }
  uint16_t last_btlbw_echo() const { return last_btlbw_q_; }

  void set_event_sink(EventSink* sink) { sink_ = sink; }

 private:
  void Register(const Registration& reg, Instant now);
  void AcceptData(const Packet& packet);
  void Close(CloseReason reason, Instant now);
  Packet MakeAck(const PacketHeader& for_header) const;

  uint32_t peer_;
  uint16_t flow_id_;
  ReceiveParams params_;

  bool registered_ = false;
  Registration registration_;
  Instant start_time_{};
  size_t segment_length_ = 0;  // learned from the first Data packet
  std::vector<uint8_t> buffer_;
  std::vector<uint8_t> received_;  // per segment: 0 missing, 1 received
  std::vector<uint8_t> critical_;  // per segment: 1 if it may not be waived
  size_t received_bytes_ = 0;
  size_t received_segments_ = 0;
  size_t critical_pending_ = 0;
  std::vector<Packet> early_packets_;

  bool end_received_ = false;
  bool closed_ = false;
  CloseReason close_reason_ = CloseReason::kAllReceived;
  Instant close_time_{};
  std::vector<Instant> stop_times_;

  uint16_t last_rtprop_q_ = 0;
  uint16_t last_btlbw_q_ = 0;
  EventSink* sink_ = nullptr;
};

}  // namespace ltp

#endif  // LTP_RECEIVER_H_
