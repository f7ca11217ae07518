#ifndef LTP_CONGESTION_H_
#define LTP_CONGESTION_H_

#include <cstddef>
#include <cstdint>
#include <deque>

#include "ltp/time.h"
#include "ltp/wire.h"

namespace ltp {

struct CongestionConfig {
  size_t max_segment_bytes = kMaxSegmentBytes;
  Duration rtprop_window = std::chrono::seconds(10);
  uint32_t btlbw_window_rounds = 10;
  Duration initial_rtprop = std::chrono::milliseconds(1);
  double initial_btlbw_bps = 100e6;
  double pacing_gain = 1.0;
  double startup_pacing_gain = 2.0;
  uint32_t startup_rounds = 10;
  // Bursts strictly larger than this are paced.
  size_t pacing_burst_threshold = 20;
};

struct SendDecision {
  enum class Kind { kSend, kWaitFor };

  static SendDecision Send() { return {Kind::kSend, Duration::zero()}; }
  static SendDecision WaitFor(Duration hint) { return {Kind::kWaitFor, hint}; }

  bool allowed() const { return kind == Kind::kSend; }

  Kind kind;
  Duration wait_hint;  // advisory
};

// BDP-based congestion control. The BDP, in packets of max_segment_bytes,
// caps the number of packets in flight; packet loss is deliberately not a
// congestion signal. RTprop is a windowed minimum over rtprop_window of RTT
// samples and BtlBw a windowed maximum over btlbw_window_rounds packet-timed
// round trips of delivery-rate samples.
class BdpController {
 public:
  explicit BdpController(CongestionConfig config = {});

  // Accounts one transmission as in flight.
  void OnSend();

  // An ACK for a packet that was in flight. Inserts the RTT sample and a
  // delivery-rate sample, recomputes the BDP and pacing rate and releases
  // one in-flight slot. `hole_before` means a packet sent earlier is still
  // unacknowledged, so the ACK gap may include a drop.
  void OnAckSample(Instant send_time, Instant ack_time,
                   size_t bytes_delivered, bool hole_before = false);

  // ACK for a packet sent once but already declared lost, whose slot was
  // released then. The RTT is unambiguous, so it is still sampled; without
  // it a run of spurious timeouts would freeze the RTT estimate.
  void OnLateAckSample(Instant send_time, Instant ack_time,
                       size_t bytes_delivered, bool hole_before = false);

  // ACK for a retransmitted packet: its RTT is ambiguous, so only the
  // in-flight slot is released.
  void OnAckWithoutSample();

  // The sender declared an in-flight packet lost at `at`. Releases its slot;
  // the estimates are untouched.
  void OnLossDeclared(Instant at);

  SendDecision MaySend(Instant now) const;

  // Zero for bursts up to the threshold, otherwise the time to emit the
  // burst at the current pacing rate.
  Duration PacingDelay(size_t burst_size) const;

  Duration rtprop() const { return rtprop_; }
  double btlbw_bps() const { return btlbw_bps_; }
  size_t bdp_packets() const { return bdp_packets_; }
  size_t inflight() const { return inflight_; }
  double pacing_rate_bps() const;
  Duration smoothed_rtt() const { return srtt_; }
  // Mean deviation of RTT samples, same weighting as smoothed_rtt.
  Duration rtt_variation() const { return rttvar_; }
  bool has_rtt_sample() const { return have_rtt_sample_; }
  bool has_rate_sample() const { return have_rate_sample_; }
  uint64_t round_count() const { return round_count_; }
  bool in_startup() const { return round_count_ < config_.startup_rounds; }
  const CongestionConfig& config() const { return config_; }

 private:
  struct TimedSample {
    Instant at;
    Duration rtt;
  };
  struct RoundSample {
    uint64_t round;
    double bps;
  };

  void Sample(Instant send_time, Instant ack_time, size_t bytes_delivered,
              bool hole_before);
  void RecomputeBdp();

  CongestionConfig config_;
  Duration rtprop_;
  double btlbw_bps_;
  size_t bdp_packets_ = 1;
  size_t inflight_ = 0;
  Duration srtt_;
  Duration rttvar_;
  bool have_rtt_sample_ = false;
  bool have_rate_sample_ = false;

  std::deque<TimedSample> rtt_window_;    // ascending rtt
  std::deque<RoundSample> rate_window_;   // descending bps
  uint64_t round_count_ = 0;
  Instant round_start_ = Instant::min();
  Instant prior_ack_time_ = Instant::min();
  Instant last_loss_time_ = Instant::min();
};

}  // namespace ltp

#endif  // LTP_CONGESTION_H_
