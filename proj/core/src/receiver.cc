#include "ltp/receiver.h"

#include <algorithm>
#include <string>

#include "ltp/error.h"

namespace ltp {

FlowReceiver::FlowReceiver(uint32_t peer, uint16_t flow_id,
                           ReceiveParams params)
    : peer_(peer), flow_id_(flow_id), params_(std::move(params)) {}

double FlowReceiver::received_fraction() const {
  if (!registered_ || registration_.total_bytes == 0) return 0.0;
  return static_cast<double>(received_bytes_) /
         static_cast<double>(registration_.total_bytes);
}

std::optional<size_t> FlowReceiver::segment_length() const {
  if (segment_length_ == 0) return std::nullopt;
  return segment_length_;
}

bool FlowReceiver::segment_received(uint32_t seq) const {
  return seq < received_.size() && received_[seq] != 0;
}

std::vector<uint32_t> FlowReceiver::missing_segments() const {
  std::vector<uint32_t> out;
  for (uint32_t s = 0; s < received_.size(); ++s) {
    if (!received_[s]) out.push_back(s);
  }
  return out;
}

Packet FlowReceiver::MakeAck(const PacketHeader& for_header) const {
  Packet ack;
  ack.header.flow_id = for_header.flow_id;
  ack.header.seq_id = for_header.seq_id;
  ack.header.type = PacketType::kAck;
  ack.header.importance = Importance::kNotCritical;
  return ack;
}

Packet FlowReceiver::OnPacket(const Packet& packet, Instant now) {
  const PacketHeader& h = packet.header;
  if (h.type == PacketType::kAck) {
    throw LtpError(ErrorCode::kMalformedPacket, "receiver got an Ack");
  }
  if (h.rtprop_q != 0) last_rtprop_q_ = h.rtprop_q;
  if (h.btlbw_q != 0) last_btlbw_q_ = h.btlbw_q;

  if (closed_) return MakeAck(h);

  switch (h.type) {
    case PacketType::kRegistration:
      if (!registered_) {
        Register(DecodeRegistrationPayload(packet.payload), now);
        std::vector<Packet> early;
        early.swap(early_packets_);
        for (const Packet& p : early) {
          if (p.header.type == PacketType::kData) AcceptData(p);
        }
      }
      break;
    case PacketType::kData:
      if (!registered_) {
        if (early_packets_.size() >= params_.max_buffered_before_registration) {
          throw LtpError(ErrorCode::kUnknownFlow,
                         "data for unregistered flow " +
                             std::to_string(flow_id_) + ", buffer full");
        }
        early_packets_.push_back(packet);
      } else {
        AcceptData(packet);
      }
      break;
    case PacketType::kEnd:
      end_received_ = true;
      break;
    case PacketType::kAck:
      break;
  }
  return MakeAck(h);
}

void FlowReceiver::Register(const Registration& reg, Instant now) {
  if (reg.total_segments == 0 || reg.total_segments > kMaxSegmentsPerFlow ||
      reg.total_bytes < reg.total_segments) {
    throw LtpError(ErrorCode::kMalformedPacket, "inconsistent registration");
  }
  registered_ = true;
  registration_ = reg;
  start_time_ = now;
  buffer_.assign(reg.total_bytes, 0);
  received_.assign(reg.total_segments, 0);
  critical_.assign(reg.total_segments, 0);

  const size_t expected_len = AlignedSegmentLength(params_.element_size);
  for (uint32_t seq : SegmentsOverlapping(reg.total_bytes, expected_len,
                                          params_.critical_ranges)) {
    if (seq < reg.total_segments && !critical_[seq]) {
      critical_[seq] = 1;
      ++critical_pending_;
    }
  }
}

void FlowReceiver::AcceptData(const Packet& packet) {
  const uint32_t seq = packet.header.seq_id;
  const uint32_t n = registration_.total_segments;
  if (seq >= n) {
    throw LtpError(ErrorCode::kMalformedPacket,
                   "seq " + std::to_string(seq) + " beyond registration");
  }
  const size_t len = packet.payload.size();
  const size_t total = registration_.total_bytes;
  if (segment_length_ == 0) {
    size_t candidate = len;
    if (seq == n - 1 && n > 1) {
      if ((total - len) % (n - 1) != 0) {
        throw LtpError(ErrorCode::kMalformedPacket, "bad final segment length");
      }
      candidate = (total - len) / (n - 1);
    }
    if (candidate == 0 || candidate * (n - 1) >= total ||
        total - candidate * (n - 1) > candidate) {
      throw LtpError(ErrorCode::kMalformedPacket,
                     "segment length inconsistent with registration");
    }
    segment_length_ = candidate;
  }
  const size_t expected = seq == n - 1 ? total - segment_length_ * (n - 1)
                                       : segment_length_;
  if (len != expected) {
    throw LtpError(ErrorCode::kMalformedPacket,
                   "segment " + std::to_string(seq) + " has length " +
                       std::to_string(len) + ", expected " +
                       std::to_string(expected));
  }
  if (received_[seq]) return;

  std::copy(packet.payload.begin(), packet.payload.end(),
            buffer_.begin() +
                static_cast<std::ptrdiff_t>(seq * segment_length_));
  received_[seq] = 1;
  received_bytes_ += len;
  ++received_segments_;
  if (critical_[seq]) {
    critical_[seq] = 0;
    --critical_pending_;
  }
}

CloseDecision FlowReceiver::PollClose(Instant now) {
  if (closed_) return {true, close_reason_};
  if (!registered_) return {};

  const Duration elapsed = now - start_time_;
  if (received_segments_ == registration_.total_segments) {
    Close(CloseReason::kAllReceived, now);
  } else if (elapsed >= params_.deadline) {
    if (critical_pending_ == 0) Close(CloseReason::kDeadlineForced, now);
  } else if (elapsed >= params_.lt_threshold) {
    if (critical_pending_ == 0 &&
        received_fraction() >= params_.pct_threshold) {
      Close(CloseReason::kEarlyClosed, now);
    }
  }
  return {closed_, close_reason_};
}

void FlowReceiver::Close(CloseReason reason, Instant now) {
  closed_ = true;
  close_reason_ = reason;
  close_time_ = now;

  const Duration echoed = DequantizeRtprop(last_rtprop_q_);
  const Duration spacing =
      echoed > Duration::zero() ? echoed : params_.default_stop_spacing;
  for (int i = 0; i < params_.stop_repeats; ++i) {
    stop_times_.push_back(now + spacing * i);
  }

  if (sink_) {
    CloseRecord rec;
    rec.at = now;
    rec.peer = peer_;
    rec.flow_id = flow_id_;
    rec.reason = reason;
    rec.elapsed = now - start_time_;
    rec.received_fraction = received_fraction();
    rec.lt_threshold = params_.lt_threshold;
    rec.deadline = params_.deadline;
    rec.pct_threshold = params_.pct_threshold;
    rec.critical_pending = critical_pending_;
    sink_->OnClose(rec);
  }
}

std::vector<Packet> FlowReceiver::TakeStops(Instant now) {
  std::vector<Packet> out;
  auto due = std::find_if(stop_times_.begin(), stop_times_.end(),
                          [now](Instant t) { return t > now; });
  for (auto it = stop_times_.begin(); it != due; ++it) {
    Packet stop;
    stop.header.flow_id = flow_id_;
    stop.header.seq_id = kEndSeq;
    stop.header.type = PacketType::kEnd;
    stop.header.importance = Importance::kCritical;
    out.push_back(std::move(stop));
  }
  stop_times_.erase(stop_times_.begin(), due);
  return out;
}

std::optional<Instant> FlowReceiver::NextWakeup(Instant now) const {
  if (closed_) {
    if (stop_times_.empty()) return std::nullopt;
    return std::max(stop_times_.front(), now);
  }
  if (!registered_) return std::nullopt;
  const Instant lt_at = SaturatingAdd(start_time_, params_.lt_threshold);
  const Instant deadline_at = SaturatingAdd(start_time_, params_.deadline);
  for (Instant t : {lt_at, deadline_at}) {
    if (t > now && t != Instant::max()) return t;
  }
  return std::nullopt;
}

std::vector<uint8_t> FlowReceiver::Reassemble() const { return buffer_; }

}  // namespace ltp
