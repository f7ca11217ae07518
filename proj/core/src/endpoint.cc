#include "ltp/endpoint.h"

#include <algorithm>
#include <unordered_map>

#include "ltp/error.h"
#include "ltp/wire.h"

namespace ltp {

Endpoint::Endpoint(NodeId id, Channel* channel) : id_(id), channel_(channel) {
  scratch_.reserve(kMaxDatagramBytes);
}

FlowSender& Endpoint::StartFlow(
    NodeId peer, uint16_t flow_id,
    std::shared_ptr<const std::vector<uint8_t>> data, Segmentation layout,
    SenderConfig config) {
  FlowKey key{peer, flow_id};
  if (senders_.count(key)) {
    throw LtpError(ErrorCode::kInvalidArgument,
                   "flow " + std::to_string(flow_id) + " to node " +
                       std::to_string(peer) + " already active");
  }
  auto sender = std::make_unique<FlowSender>(flow_id, std::move(data),
                                             std::move(layout), config);
  sender->set_event_sink(sink_);
  FlowSender& ref = *sender;
  senders_.emplace(key, Slot<FlowSender>{std::move(sender), true, std::nullopt});
  any_dirty_ = true;
  return ref;
}

FlowSender* Endpoint::sender(NodeId peer, uint16_t flow_id) {
  auto it = senders_.find(FlowKey{peer, flow_id});
  return it == senders_.end() ? nullptr : it->second.flow.get();
}

FlowReceiver* Endpoint::receiver(NodeId peer, uint16_t flow_id) {
  auto it = receivers_.find(FlowKey{peer, flow_id});
  return it == receivers_.end() ? nullptr : it->second.flow.get();
}

void Endpoint::RemoveSender(NodeId peer, uint16_t flow_id) {
  senders_.erase(FlowKey{peer, flow_id});
}

void Endpoint::RemoveReceiver(NodeId peer, uint16_t flow_id) {
  FlowKey key{peer, flow_id};
  if (receivers_.erase(key)) retired_incoming_.insert(key);
}

std::optional<CcEcho> Endpoint::LastEcho(NodeId peer) const {
  auto it = echoes_.find(peer);
  if (it == echoes_.end()) return std::nullopt;
  return it->second;
}

void Endpoint::Transmit(NodeId peer, const Packet& packet) {
  scratch_.clear();
  HeaderBytes h = EncodeHeader(packet.header);
  scratch_.insert(scratch_.end(), h.begin(), h.end());
  scratch_.insert(scratch_.end(), packet.payload.begin(), packet.payload.end());
  channel_->Send(id_, peer, scratch_);
}

void Endpoint::OnDatagram(const Datagram& datagram, Instant now) {
  ++stats_.packets_received;
  Packet packet;
  try {
    packet = DecodePacket(datagram.bytes);
  } catch (const LtpError&) {
    ++stats_.malformed;
    return;
  }
  const NodeId peer = datagram.from;
  const PacketHeader& h = packet.header;
  if (h.rtprop_q != 0 && h.btlbw_q != 0) {
    echoes_[peer] = CcEcho{h.rtprop_q, h.btlbw_q};
  }
  FlowKey key{peer, h.flow_id};

  if (h.type == PacketType::kAck) {
    auto it = senders_.find(key);
    if (it == senders_.end()) {
      ++stats_.stale;
      return;
    }
    try {
      it->second.flow->OnAck(h.seq_id, now);
    } catch (const LtpError&) {
      ++stats_.unknown_seq;
      return;
    }
    it->second.dirty = true;
    any_dirty_ = true;
    return;
  }
  if (h.type == PacketType::kEnd) {
    // An End travelling towards the data sender is the receiver's stop.
    auto it = senders_.find(key);
    if (it != senders_.end()) {
      it->second.flow->OnStop();
      it->second.dirty = true;
      any_dirty_ = true;
      return;
    }
  }
  HandleIncoming(peer, packet, now);
}

void Endpoint::HandleIncoming(NodeId peer, const Packet& packet, Instant now) {
  FlowKey key{peer, packet.header.flow_id};
  auto it = receivers_.find(key);
  if (it == receivers_.end()) {
    if (retired_incoming_.count(key)) {
      ++stats_.stale;
      PacketHeader ack = packet.header;
      ack.type = PacketType::kAck;
      ack.importance = Importance::kNotCritical;
      ack.rtprop_q = 0;
      ack.btlbw_q = 0;
      Transmit(peer, Packet{ack, {}});
      return;
    }
    ReceiveParams params = policy_ ? policy_(peer, key.flow_id)
                                   : ReceiveParams{};
    auto receiver = std::make_unique<FlowReceiver>(peer, key.flow_id, params);
    receiver->set_event_sink(sink_);
    it = receivers_.emplace(key, Slot<FlowReceiver>{std::move(receiver), true, std::nullopt})
             .first;
  }
  try {
    Packet ack = it->second.flow->OnPacket(packet, now);
    Transmit(peer, ack);
  } catch (const LtpError& e) {
    if (e.code() == ErrorCode::kUnknownFlow) {
      ++stats_.unknown_flow;
    } else {
      ++stats_.malformed;
    }
    return;
  }
  it->second.dirty = true;
  any_dirty_ = true;
}

void Endpoint::PollSender(const FlowKey& key, Slot<FlowSender>& slot,
                          Instant now) {
  for (;;) {
    Emission e = slot.flow->NextPacket(now);
    auto* packet = std::get_if<Packet>(&e);
    if (!packet) break;
    Transmit(key.peer, *packet);
  }
  slot.dirty = false;
  slot.wake = slot.flow->NextWakeup(now);
}

void Endpoint::PollReceiver(const FlowKey& key, Slot<FlowReceiver>& slot,
                            Instant now) {
  slot.flow->PollClose(now);
  for (const Packet& stop : slot.flow->TakeStops(now)) {
    Transmit(key.peer, stop);
  }
  slot.dirty = false;
  slot.wake = slot.flow->NextWakeup(now);
}

void Endpoint::Poll(Instant now) {
  if (!any_dirty_) {
    auto wake = NextWakeup(now);
    if (!wake || *wake > now) return;
  }
  any_dirty_ = false;
  for (auto& [key, slot] : senders_) {
    if (slot.dirty || (slot.wake && *slot.wake <= now)) {
      PollSender(key, slot, now);
    }
  }
  for (auto& [key, slot] : receivers_) {
    if (slot.dirty || (slot.wake && *slot.wake <= now)) {
      PollReceiver(key, slot, now);
    }
  }
}

// Cached per flow at its last poll; a flow's timers only move when it is
// touched, and touching marks it dirty.
std::optional<Instant> Endpoint::NextWakeup(Instant) const {
  std::optional<Instant> best;
  auto take = [&](const std::optional<Instant>& t) {
    if (t && (!best || *t < *best)) best = t;
  };
  for (const auto& [key, slot] : senders_) take(slot.wake);
  for (const auto& [key, slot] : receivers_) take(slot.wake);
  return best;
}

bool RunUntil(Channel& channel, std::span<Endpoint* const> endpoints,
              const std::function<bool()>& done, Instant give_up_at) {
  std::unordered_map<NodeId, Endpoint*> by_id;
  for (Endpoint* ep : endpoints) by_id[ep->id()] = ep;

  Instant now = channel.Now();
  for (Endpoint* ep : endpoints) ep->Poll(now);
  while (!done()) {
    now = channel.Now();
    if (now >= give_up_at) return false;
    Instant next = give_up_at;
    for (Endpoint* ep : endpoints) {
      auto wake = ep->NextWakeup(now);
      if (wake && *wake < next) next = *wake;
    }
    if (next == give_up_at && channel.Idle()) return false;
    std::vector<Datagram> batch = channel.WaitUntil(next);
    now = channel.Now();
    for (const Datagram& d : batch) {
      auto it = by_id.find(d.to);
      if (it != by_id.end()) it->second->OnDatagram(d, now);
    }
    for (Endpoint* ep : endpoints) ep->Poll(now);
  }
  return true;
}

}  // namespace ltp
