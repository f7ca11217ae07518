#include "ltp/congestion.h"

#include <algorithm>
#include <cmath>

namespace ltp {

BdpController::BdpController(CongestionConfig config)
    : config_(config),
      rtprop_(config.initial_rtprop),
      btlbw_bps_(config.initial_btlbw_bps),
      srtt_(config.initial_rtprop),
      rttvar_(config.initial_rtprop / 2) {
  RecomputeBdp();
}

void BdpController::OnSend() { ++inflight_; }

void BdpController::OnAckSample(Instant send_time, Instant ack_time,
                                size_t bytes_delivered, bool hole_before) {
  if (inflight_ > 0) --inflight_;
  Sample(send_time, ack_time, bytes_delivered, hole_before);
}

void BdpController::OnLateAckSample(Instant send_time, Instant ack_time,
                                    size_t bytes_delivered, bool hole_before) {
  Sample(send_time, ack_time, bytes_delivered, hole_before);
}

void BdpController::Sample(Instant send_time, Instant ack_time,
                           size_t bytes_delivered, bool hole_before) {
  if (ack_time < send_time) return;

  // Packet-timed rounds: a round ends once a packet sent after the previous
  // boundary is acknowledged.
  if (send_time >= round_start_) {
    ++round_count_;
    round_start_ = ack_time;
  }

  const Duration rtt = ack_time - send_time;
  while (!rtt_window_.empty() && rtt_window_.back().rtt >= rtt) {
    rtt_window_.pop_back();
  }
  rtt_window_.push_back({ack_time, rtt});
  while (rtt_window_.front().at < ack_time - config_.rtprop_window) {
    rtt_window_.pop_front();
  }
  rtprop_ = rtt_window_.front().rtt;

  if (!have_rtt_sample_) {
    srtt_ = rtt;
    rttvar_ = rtt / 2;
    have_rtt_sample_ = true;
  } else {
    const Duration dev = srtt_ > rtt ? srtt_ - rtt : rtt - srtt_;
    rttvar_ = (rttvar_ * 3 + dev) / 4;
    srtt_ = (srtt_ * 7 + rtt) / 8;
  }

  // Some samples carry no bottleneck information. If the prior ACK predates
  // this send, the interval is the packet's own RTT; a flow held at a
  // one-packet cap would keep measuring one packet per RTT. If an earlier
  // packet is missing, or a loss was declared inside the interval, the gap
  // reflects the loss, and loss must not lower the estimate. Such samples
  // may raise BtlBw but do not age the window.
  const Instant interval_start = std::max(prior_ack_time_, send_time);
  const bool limited = hole_before || prior_ack_time_ < send_time ||
                       last_loss_time_ >= interval_start;
  prior_ack_time_ = ack_time;
  const Duration elapsed = ack_time - interval_start;
  if (elapsed > Duration::zero() && bytes_delivered > 0) {
    const double bps = static_cast<double>(bytes_delivered) * 8.0 /
                       ToSeconds(elapsed);
    if (!limited || !have_rate_sample_ || bps >= btlbw_bps_) {
      while (!rate_window_.empty() && rate_window_.back().bps <= bps) {
        rate_window_.pop_back();
      }
      rate_window_.push_back({round_count_, bps});
      while (rate_window_.front().round + config_.btlbw_window_rounds <=
             round_count_) {
        rate_window_.pop_front();
      }
      btlbw_bps_ = rate_window_.front().bps;
      have_rate_sample_ = true;
    }
  }

  RecomputeBdp();
}

void BdpController::OnAckWithoutSample() {
  if (inflight_ > 0) --inflight_;
}

void BdpController::OnLossDeclared(Instant at) {
  last_loss_time_ = std::max(last_loss_time_, at);
  if (inflight_ > 0) --inflight_;
}

SendDecision BdpController::MaySend(Instant /*now*/) const {
  if (inflight_ < bdp_packets_) return SendDecision::Send();
  return SendDecision::WaitFor(rtprop_);
}

Duration BdpController::PacingDelay(size_t burst_size) const {
  if (burst_size <= config_.pacing_burst_threshold) return Duration::zero();
  const double rate = pacing_rate_bps();
  if (!(rate > 0)) return Duration::zero();
  const double bits = static_cast<double>(burst_size) *
                      static_cast<double>(config_.max_segment_bytes) * 8.0;
  return std::max(Duration(1), FromSeconds(bits / rate));
}

double BdpController::pacing_rate_bps() const {
  const double gain =
      in_startup() ? config_.startup_pacing_gain : config_.pacing_gain;
  return gain * btlbw_bps_;
}

void BdpController::RecomputeBdp() {
  const double packets = ToSeconds(rtprop_) * btlbw_bps_ /
                         (8.0 * static_cast<double>(config_.max_segment_bytes));
  // Guard against 171.0000000001 style rounding in the product.
  const double rounded = std::ceil(packets - 1e-9);
  bdp_packets_ = rounded < 1.0 ? 1 : static_cast<size_t>(rounded);
}

}  // namespace ltp
