#ifndef LTP_SIM_CHANNEL_H_
#define LTP_SIM_CHANNEL_H_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <vector>

#include "ltp/channel.h"

namespace ltp {

struct ChannelConfig {
  // Independent per-packet (Bernoulli) non-congestion loss.
  double loss_rate = 0.0;
  Duration one_way_delay = std::chrono::microseconds(25);
  // Uniform extra delay in [0, delay_jitter].
  Duration delay_jitter = Duration::zero();
  double bandwidth_bps = 10e9;
  // Drop-tail capacity of the switch port in front of each receiver.
  size_t queue_capacity = 128;
  // Sender NIC queue; large because a host backs up rather than drops.
  size_t nic_queue_capacity = 1 << 20;
  // Probability that a packet is held back by reorder_delay.
  double reorder_rate = 0.0;
  Duration reorder_delay = std::chrono::microseconds(100);
  uint64_t seed = 1;
};

// Throws LtpError(kConfig) naming the offending field.
void ValidateChannelConfig(const ChannelConfig& config);

struct ChannelStats {
  uint64_t sent = 0;
  uint64_t delivered = 0;
  uint64_t dropped_random = 0;
  uint64_t dropped_queue = 0;
  uint64_t bytes_delivered = 0;

  uint64_t dropped() const { return dropped_random + dropped_queue; }
};

// Deterministic star network on a virtual clock. Every node sends through
// its own NIC link into a switch, and the switch forwards through a
// drop-tail port per destination, so many senders to one receiver share
// that receiver's port: incast. Each link serializes at bandwidth_bps
// including IP/UDP overhead.
class SimulatedChannel : public Channel {
 public:
  explicit SimulatedChannel(ChannelConfig config, Instant start = Instant{});

  Instant Now() const override { return now_; }
  SendOutcome Send(NodeId from, NodeId to,
                   std::span<const uint8_t> datagram) override;
  std::vector<Datagram> WaitUntil(Instant deadline) override;
  bool Idle() const override { return events_.empty(); }

  // Moves the clock to `to`, returning every datagram delivered on the way
  // in delivery order; ties break by sender id, then send sequence.
  std::vector<Datagram> AdvanceClock(Instant to);

  std::optional<Instant> NextEventTime() const;
  const ChannelStats& stats() const { return stats_; }
  const ChannelConfig& config() const { return config_; }

 private:
  enum class Stage : uint8_t { kSwitchArrival, kDelivery };

  struct Event {
    Instant at;
    NodeId from;
    uint64_t send_seq;
    Stage stage;
    NodeId to;
    Duration serialization;
    Duration extra_delay;
    std::vector<uint8_t> bytes;
  };
  struct EventAfter {
    bool operator()(const Event& a, const Event& b) const;
  };
  struct Link {
    Instant busy_until{};
    std::deque<Instant> finish_times;
  };

  Link& NicOf(NodeId node);
  Link& PortOf(NodeId node);
  double Uniform();
  void Push(Event event);
  Event Pop();
  void ProcessArrival(Event event);

  ChannelConfig config_;
  Instant now_;
  std::mt19937_64 rng_;
  uint64_t next_send_seq_ = 0;
  std::vector<Event> events_;  // min-heap via EventAfter
  std::vector<Link> nics_;
  std::vector<Link> ports_;
  ChannelStats stats_;
};

}  // namespace ltp

#endif  // LTP_SIM_CHANNEL_H_
