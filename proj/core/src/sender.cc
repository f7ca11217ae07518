#include "ltp/sender.h"

#include <algorithm>
#include <string>

#include "ltp/error.h"

namespace ltp {

FlowSender::FlowSender(uint16_t flow_id,
                       std::shared_ptr<const std::vector<uint8_t>> data,
                       Segmentation layout, SenderConfig config)
    : flow_id_(flow_id),
      data_(std::move(data)),
      layout_(std::move(layout)),
      config_(config),
      cc_(config.congestion),
      rng_(config.seed ^ (uint64_t{flow_id} * 0x9E3779B97F4A7C15ull)) {
  if (!data_ || data_->size() != layout_.total_bytes) {
    throw LtpError(ErrorCode::kInvalidArgument,
                   "segmentation does not match the data buffer");
  }
  const size_t n = layout_.segments.size();
  states_.resize(n + 2);
  states_[n].critical = true;      // registration
  states_[n + 1].critical = true;  // End

  states_[n].where = Where::kCq;
  cq_.push_back(kRegistrationSeq);
  for (const Segment& seg : layout_.segments) {
    SeqState& st = states_[seg.seq];
    if (seg.importance == Importance::kCritical) {
      st.critical = true;
      st.where = Where::kCq;
      cq_.push_back(seg.seq);
      ++critical_total_;
    } else {
      st.where = Where::kNq;
      nq_.push_back(seg.seq);
    }
  }
}

size_t FlowSender::IndexOf(uint32_t seq) const {
  const size_t n = layout_.segments.size();
  if (seq == kRegistrationSeq) return n;
  if (seq == kEndSeq) return n + 1;
  if (seq < n) return seq;
  throw LtpError(ErrorCode::kUnknownSeq,
                 "flow " + std::to_string(flow_id_) + " has no seq " +
                     std::to_string(seq));
}

uint32_t FlowSender::SeqOf(size_t index) const {
  const size_t n = layout_.segments.size();
  if (index == n) return kRegistrationSeq;
  if (index == n + 1) return kEndSeq;
  return static_cast<uint32_t>(index);
}

size_t FlowSender::QueuedCount() const {
  return cq_.size() + nq_.size() + rq_.size();
}

Duration FlowSender::Rto() const {
  const Duration base =
      std::max({cc_.smoothed_rtt() + 4 * cc_.rtt_variation(),
                2 * cc_.rtprop(), config_.min_rto});
  return base * (int64_t{1} << rto_backoff_);
}

bool FlowSender::registration_acked() const {
  return states_[layout_.segments.size()].acked;
}

bool FlowSender::acked(uint32_t seq) const { return StateOf(seq).acked; }

bool FlowSender::declared_lost(uint32_t seq) const {
  return StateOf(seq).declared_lost;
}

int FlowSender::later_acked_count(uint32_t seq) const {
  const SeqState& st = StateOf(seq);
  if (st.last_send_pos == kNeverSent) return 0;
  return static_cast<int>(std::count_if(
      top_acked_positions_.begin(), top_acked_positions_.end(),
      [&](uint32_t pos) { return pos > st.last_send_pos; }));
}

bool FlowSender::all_emitted_critical_acked() const {
  return std::all_of(states_.begin(), states_.end(), [](const SeqState& st) {
    return !st.critical || st.transmissions == 0 || st.acked;
  });
}

bool FlowSender::EndReady() const {
  const SeqState& end = states_.back();
  if (end.acked || end.outstanding) return false;
  if (stopped_) return end_emitted_;
  return QueuedCount() == 0 && registration_acked() &&
         critical_acked_ == critical_total_;
}

bool FlowSender::complete() const {
  const SeqState& end = states_.back();
  if (!registration_acked() || critical_acked_ != critical_total_) return false;
  if (end_emitted_ && !end.acked) return false;
  return stopped_ || (end.acked && data_acked_ == layout_.segments.size());
}

void FlowSender::ProcessTimers(Instant now) {
  const size_t n = layout_.segments.size();
  if (states_[n].outstanding &&
      now >= states_[n].last_send_time + 2 * cc_.rtprop()) {
    DeclareLost(kRegistrationSeq, now, /*by_timeout=*/true);
  }
  if (states_[n + 1].outstanding &&
      now >= states_[n + 1].last_send_time + cc_.rtprop()) {
    DeclareLost(kEndSeq, now, /*by_timeout=*/true);
  }
  if (outstanding_data_positions_.empty()) return;

  const Duration rto = Rto();
  const uint32_t oldest = *outstanding_data_positions_.begin();
  const Instant oldest_sent = states_[sent_log_[oldest]].last_send_time;
  if (now < std::max(last_progress_, oldest_sent) + rto) return;

  std::vector<uint32_t> expired;
  for (uint32_t pos : outstanding_data_positions_) {
    const uint32_t seq = sent_log_[pos];
    if (states_[seq].last_send_time + rto > now) break;
    expired.push_back(seq);
  }
  for (uint32_t seq : expired) DeclareLost(seq, now, /*by_timeout=*/true);
  if (!expired.empty()) {
    rto_backoff_ = std::min(rto_backoff_ + 1, kMaxRtoBackoff);
    last_progress_ = now;
  }
}

void FlowSender::DeclareLost(uint32_t seq, Instant now, bool by_timeout) {
  SeqState& st = StateOf(seq);
  if (st.acked || st.declared_lost) return;

  LossRecord rec;
  rec.at = now;
  rec.flow_id = flow_id_;
  rec.seq = seq;
  rec.critical = st.critical;
  rec.by_timeout = by_timeout;
  rec.bdp_before = cc_.bdp_packets();
  rec.rtprop_before = cc_.rtprop();
  rec.btlbw_before = cc_.btlbw_bps();

  st.declared_lost = true;
  if (st.outstanding) {
    st.outstanding = false;
    if (seq < layout_.segments.size()) {
      outstanding_data_positions_.erase(st.last_send_pos);
    }
    cc_.OnLossDeclared(now);
  }
  ++stats_.losses_declared;
  if (by_timeout) ++stats_.timeouts;

  rec.bdp_after = cc_.bdp_packets();
  rec.rtprop_after = cc_.rtprop();
  rec.btlbw_after = cc_.btlbw_bps();
  if (sink_) sink_->OnLoss(rec);

  Requeue(seq);
}

void FlowSender::Requeue(uint32_t seq) {
  if (seq == kEndSeq) return;  // re-emitted by EndReady()
  SeqState& st = StateOf(seq);
  if (st.critical) {
    st.where = Where::kCq;
    if (seq == kRegistrationSeq) {
      cq_.push_front(seq);
    } else {
      cq_.push_back(seq);
    }
    return;
  }
  if (stopped_) {
    ++stats_.discarded_on_stop;
    return;
  }
  std::uniform_int_distribution<size_t> pick(0, rq_.size());
  st.where = Where::kRq;
  rq_.insert(rq_.begin() + static_cast<std::ptrdiff_t>(pick(rng_)), seq);
}

void FlowSender::RemoveFromQueue(uint32_t seq) {
  SeqState& st = StateOf(seq);
  std::deque<uint32_t>* q = nullptr;
  switch (st.where) {
    case Where::kCq: q = &cq_; break;
    case Where::kNq: q = &nq_; break;
    case Where::kRq: q = &rq_; break;
    case Where::kNone: return;
  }
  q->erase(std::find(q->begin(), q->end(), seq));
  st.where = Where::kNone;
}

Emission FlowSender::NextPacket(Instant now) {
  ProcessTimers(now);
  if (complete()) return NothingToSend{};

  std::deque<uint32_t>* source = nullptr;
  uint32_t seq = 0;
  if (!cq_.empty()) {
    source = &cq_;
  } else if (!nq_.empty()) {
    source = &nq_;
  } else if (!rq_.empty()) {
    source = &rq_;
  } else if (EndReady()) {
    seq = kEndSeq;
  } else {
    return NothingToSend{};
  }
  if (source) seq = source->front();

  if (now < next_send_time_) return Paced{next_send_time_ - now};
  const SendDecision decision = cc_.MaySend(now);
  if (!decision.allowed()) return CwndLimited{decision.wait_hint};

  const size_t room = cc_.bdp_packets() - cc_.inflight();
  const size_t burst = std::min(room, std::max<size_t>(QueuedCount(), 1));
  if (source) source->pop_front();

  SeqState& st = StateOf(seq);
  st.where = Where::kNone;

  SendRecord rec;
  rec.at = now;
  rec.flow_id = flow_id_;
  rec.seq = seq;
  rec.type = seq == kRegistrationSeq ? PacketType::kRegistration
             : seq == kEndSeq        ? PacketType::kEnd
                                     : PacketType::kData;
  rec.retransmission = st.transmissions > 0;
  rec.inflight_before = cc_.inflight();
  rec.bdp_packets = cc_.bdp_packets();
  if (sink_) sink_->OnSend(rec);

  cc_.OnSend();
  const auto pos = static_cast<uint32_t>(sent_log_.size());
  sent_log_.push_back(seq);
  st.last_send_pos = pos;
  st.last_send_time = now;
  st.outstanding = true;
  st.declared_lost = false;
  ++st.transmissions;

  ++stats_.transmissions;
  if (rec.retransmission) ++stats_.retransmissions;
  if (rec.type == PacketType::kData) {
    ++stats_.data_transmissions;
    outstanding_data_positions_.insert(pos);
  }
  if (rec.type == PacketType::kEnd) end_emitted_ = true;
  if (first_send_time_ == Instant::max()) first_send_time_ = now;

  if (burst > cc_.config().pacing_burst_threshold) {
    next_send_time_ = now + cc_.PacingDelay(burst) / burst;
  } else {
    next_send_time_ = now;
  }
  return BuildPacket(seq);
}

std::vector<uint32_t> FlowSender::OnAck(uint32_t seq, Instant now) {
  SeqState& st = StateOf(seq);
  if (st.transmissions == 0) {
    throw LtpError(ErrorCode::kUnknownSeq,
                   "ack for unsent seq " + std::to_string(seq));
  }
  if (st.acked) {
    ++stats_.duplicate_acks;
    return {};
  }
  ++stats_.acks;
  last_progress_ = now;
  rto_backoff_ = 0;

  const bool is_data = seq < layout_.segments.size();
  const bool hole_before = !outstanding_data_positions_.empty() &&
                           *outstanding_data_positions_.begin() <
                               st.last_send_pos;
  if (st.outstanding) {
    st.outstanding = false;
    if (is_data) outstanding_data_positions_.erase(st.last_send_pos);
    if (st.transmissions == 1) {
      const size_t bytes =
          kHeaderBytes + (is_data ? layout_.segments[seq].length : 0);
      cc_.OnAckSample(st.last_send_time, now, bytes, hole_before);
    } else {
      cc_.OnAckWithoutSample();
    }
  } else {
    if (st.transmissions == 1) {
      const size_t bytes =
          kHeaderBytes + (is_data ? layout_.segments[seq].length : 0);
      cc_.OnLateAckSample(st.last_send_time, now, bytes, hole_before);
    }
    if (st.where != Where::kNone) {
      RemoveFromQueue(seq);
      ++stats_.cancelled_retransmissions;
    }
  }
  st.acked = true;
  st.declared_lost = false;
  if (is_data) {
    ++data_acked_;
    if (st.critical) ++critical_acked_;
  }

  auto& top = top_acked_positions_;
  top.insert(std::upper_bound(top.begin(), top.end(), st.last_send_pos,
                              std::greater<>()),
             st.last_send_pos);
  if (top.size() > kLossThreshold) top.pop_back();

  std::vector<uint32_t> newly_lost;
  if (top.size() == kLossThreshold) {
    const uint32_t bound = top.back();
    for (; loss_scan_cursor_ < bound; ++loss_scan_cursor_) {
      const uint32_t s = sent_log_[loss_scan_cursor_];
      const SeqState& cand = StateOf(s);
      if (cand.last_send_pos != loss_scan_cursor_ || cand.acked ||
          cand.declared_lost) {
        continue;
      }
      newly_lost.push_back(s);
    }
  }
  for (uint32_t s : newly_lost) DeclareLost(s, now, /*by_timeout=*/false);
  return newly_lost;
}

void FlowSender::OnStop() {
  if (stopped_) return;
  stopped_ = true;
  for (uint32_t seq : nq_) StateOf(seq).where = Where::kNone;
  for (uint32_t seq : rq_) StateOf(seq).where = Where::kNone;
  stats_.discarded_on_stop += nq_.size() + rq_.size();
  nq_.clear();
  rq_.clear();
}

std::optional<Instant> FlowSender::NextWakeup(Instant now) const {
  if (complete()) return std::nullopt;
  std::optional<Instant> wake;
  auto consider = [&wake, now](Instant t) {
    if (t <= now) return;
    if (!wake || t < *wake) wake = t;
  };
  const size_t n = layout_.segments.size();
  if (states_[n].outstanding) {
    consider(states_[n].last_send_time + 2 * cc_.rtprop());
  }
  if (states_[n + 1].outstanding) {
    consider(states_[n + 1].last_send_time + cc_.rtprop());
  }
  if (!outstanding_data_positions_.empty()) {
    const uint32_t oldest = *outstanding_data_positions_.begin();
    consider(std::max(last_progress_,
                      states_[sent_log_[oldest]].last_send_time) +
             Rto());
  }
  if ((QueuedCount() > 0 || EndReady()) && next_send_time_ != Instant::min()) {
    consider(next_send_time_);
  }
  return wake;
}

Packet FlowSender::BuildPacket(uint32_t seq) const {
  const SeqState& st = StateOf(seq);
  Packet p;
  p.header.flow_id = flow_id_;
  p.header.seq_id = seq;
  p.header.importance =
      st.critical ? Importance::kCritical : Importance::kNotCritical;
  if (cc_.has_rtt_sample() && cc_.has_rate_sample()) {
    const QuantizedCc q = QuantizeCc(cc_.rtprop(), cc_.btlbw_bps());
    p.header.rtprop_q = q.rtprop_q;
    p.header.btlbw_q = q.btlbw_q;
  }
  if (seq == kRegistrationSeq) {
    p.header.type = PacketType::kRegistration;
    p.payload = EncodeRegistrationPayload(layout_.registration());
  } else if (seq == kEndSeq) {
    p.header.type = PacketType::kEnd;
  } else {
    p.header.type = PacketType::kData;
    const Segment& seg = layout_.segments[seq];
    p.payload.assign(data_->begin() + static_cast<std::ptrdiff_t>(seg.offset),
                     data_->begin() +
                         static_cast<std::ptrdiff_t>(seg.offset + seg.length));
  }
  return p;
}

}  // namespace ltp
