#ifndef LTP_ENDPOINT_H_
#define LTP_ENDPOINT_H_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "ltp/channel.h"
#include "ltp/events.h"
#include "ltp/receiver.h"
#include "ltp/sender.h"

namespace ltp {

struct FlowKey {
  NodeId peer = 0;
  uint16_t flow_id = 0;
  auto operator<=>(const FlowKey&) const = default;
};

struct EndpointStats {
  uint64_t packets_received = 0;
  uint64_t malformed = 0;
  uint64_t unknown_seq = 0;
  uint64_t unknown_flow = 0;
  uint64_t stale = 0;
};

struct CcEcho {
  uint16_t rtprop_q = 0;
  uint16_t btlbw_q = 0;
};

// One node: its outgoing flows (senders) and incoming flows (receivers),
// keyed by (peer, flow id), multiplexed over a Channel.
//
// Protocol errors caused by a peer's packet are counted and the packet is
// dropped; they never escape OnDatagram.
class Endpoint {
 public:
  using ReceivePolicy = std::function<ReceiveParams(NodeId peer,
                                                    uint16_t flow_id)>;

  Endpoint(NodeId id, Channel* channel);

  NodeId id() const { return id_; }

  // Parameters for incoming flows; defaults to a fully reliable flow.
  void set_receive_policy(ReceivePolicy policy) { policy_ = std::move(policy); }
  void set_event_sink(EventSink* sink) { sink_ = sink; }

  FlowSender& StartFlow(NodeId peer, uint16_t flow_id,
                        std::shared_ptr<const std::vector<uint8_t>> data,
                        Segmentation layout, SenderConfig config);

  void OnDatagram(const Datagram& datagram, Instant now);
  // Emits everything currently permitted for flows that were touched since
  // the last poll or whose timers are due.
  void Poll(Instant now);
  std::optional<Instant> NextWakeup(Instant now) const;

  FlowSender* sender(NodeId peer, uint16_t flow_id);
  FlowReceiver* receiver(NodeId peer, uint16_t flow_id);

  // Forgets a flow. Late packets of a removed incoming flow are still
  // acknowledged so that the remote sender can finish.
  void RemoveSender(NodeId peer, uint16_t flow_id);
  void RemoveReceiver(NodeId peer, uint16_t flow_id);

  // Most recent congestion estimates echoed by `peer`, if any.
  std::optional<CcEcho> LastEcho(NodeId peer) const;

  const EndpointStats& stats() const { return stats_; }

 private:
  void Transmit(NodeId peer, const Packet& packet);
  void HandleIncoming(NodeId peer, const Packet& packet, Instant now);
  template <typename Flow>
  struct Slot {
    std::unique_ptr<Flow> flow;
    bool dirty = true;
    std::optional<Instant> wake;
  };

  void PollSender(const FlowKey& key, Slot<FlowSender>& slot, Instant now);
  void PollReceiver(const FlowKey& key, Slot<FlowReceiver>& slot,
                    Instant now);

  NodeId id_;
  Channel* channel_;
  ReceivePolicy policy_;
  EventSink* sink_ = nullptr;
  std::map<FlowKey, Slot<FlowSender>> senders_;
  std::map<FlowKey, Slot<FlowReceiver>> receivers_;
  std::set<FlowKey> retired_incoming_;
  bool any_dirty_ = false;
  std::map<NodeId, CcEcho> echoes_;
  std::vector<uint8_t> scratch_;
  EndpointStats stats_;
};

// Drives endpoints sharing `channel` until `done` returns true (true) or the
// channel clock reaches `give_up_at` (false). A simulated channel that runs
// out of events with nothing scheduled also returns false.
bool RunUntil(Channel& channel, std::span<Endpoint* const> endpoints,
              const std::function<bool()>& done, Instant give_up_at);

}  // namespace ltp

#endif  // LTP_ENDPOINT_H_
