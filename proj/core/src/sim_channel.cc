#include "ltp/sim_channel.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "ltp/error.h"
#include "ltp/wire.h"

namespace ltp {

void ValidateChannelConfig(const ChannelConfig& c) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw LtpError(ErrorCode::kConfig, "channel." + field + ": " + why);
  };
  if (!(c.loss_rate >= 0.0 && c.loss_rate <= 1.0)) {
    fail("loss_rate", "must be within [0, 1]");
  }
  if (!(c.reorder_rate >= 0.0 && c.reorder_rate <= 1.0)) {
    fail("reorder_rate", "must be within [0, 1]");
  }
  if (!(c.bandwidth_bps > 0.0)) fail("bandwidth_bps", "must be positive");
  if (c.queue_capacity == 0) fail("queue_capacity", "must be positive");
  if (c.nic_queue_capacity == 0) fail("nic_queue_capacity", "must be positive");
  if (c.one_way_delay < Duration::zero()) fail("one_way_delay", "negative");
  if (c.delay_jitter < Duration::zero()) fail("delay_jitter", "negative");
  if (c.reorder_delay < Duration::zero()) fail("reorder_delay", "negative");
}

bool SimulatedChannel::EventAfter::operator()(const Event& a,
                                              const Event& b) const {
  return std::tie(a.at, a.from, a.send_seq, a.stage) >
         std::tie(b.at, b.from, b.send_seq, b.stage);
}

SimulatedChannel::SimulatedChannel(ChannelConfig config, Instant start)
    : config_(config), now_(start), rng_(config.seed) {
  ValidateChannelConfig(config_);
}

SimulatedChannel::Link& SimulatedChannel::NicOf(NodeId node) {
  if (node >= nics_.size()) nics_.resize(node + 1);
  return nics_[node];
}

SimulatedChannel::Link& SimulatedChannel::PortOf(NodeId node) {
  if (node >= ports_.size()) ports_.resize(node + 1);
  return ports_[node];
}

double SimulatedChannel::Uniform() {
  // 53 random bits mapped to [0, 1); independent of the standard library's
  // distribution implementations.
  return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
}

void SimulatedChannel::Push(Event event) {
  events_.push_back(std::move(event));
  std::push_heap(events_.begin(), events_.end(), EventAfter{});
}

SimulatedChannel::Event SimulatedChannel::Pop() {
  std::pop_heap(events_.begin(), events_.end(), EventAfter{});
  Event e = std::move(events_.back());
  events_.pop_back();
  return e;
}

SendOutcome SimulatedChannel::Send(NodeId from, NodeId to,
                                   std::span<const uint8_t> datagram) {
  if (datagram.size() > kMaxDatagramBytes) {
    throw LtpError(ErrorCode::kOversizedDatagram,
                   std::to_string(datagram.size()) + " byte datagram");
  }
  ++stats_.sent;
  const uint64_t seq = next_send_seq_++;

  // Every send consumes the same number of draws so that the random stream
  // depends only on the order of sends.
  const double loss_draw = Uniform();
  const double jitter_draw = Uniform();
  const double reorder_draw = Uniform();
  if (loss_draw < config_.loss_rate) {
    ++stats_.dropped_random;
    return SendOutcome::kDroppedRandom;
  }

  const double wire_bits =
      static_cast<double>(datagram.size() + kIpUdpOverheadBytes) * 8.0;
  const auto serialization = std::max(
      Duration(1), Duration(static_cast<Duration::rep>(std::llround(
                       wire_bits / config_.bandwidth_bps * 1e9))));

  Link& nic = NicOf(from);
  while (!nic.finish_times.empty() && nic.finish_times.front() <= now_) {
    nic.finish_times.pop_front();
  }
  if (nic.finish_times.size() >= config_.nic_queue_capacity) {
    ++stats_.dropped_queue;
    return SendOutcome::kDroppedQueueFull;
  }
  const Instant start = std::max(now_, nic.busy_until);
  nic.busy_until = start + serialization;
  nic.finish_times.push_back(nic.busy_until);

  Duration extra = Duration(static_cast<Duration::rep>(
      jitter_draw * static_cast<double>(config_.delay_jitter.count())));
  if (reorder_draw < config_.reorder_rate) extra += config_.reorder_delay;

  Push(Event{nic.busy_until, from, seq, Stage::kSwitchArrival, to,
             serialization, extra,
             std::vector<uint8_t>(datagram.begin(), datagram.end())});
  return SendOutcome::kAccepted;
}

void SimulatedChannel::ProcessArrival(Event event) {
  Link& port = PortOf(event.to);
  while (!port.finish_times.empty() && port.finish_times.front() <= event.at) {
    port.finish_times.pop_front();
  }
  if (port.finish_times.size() >= config_.queue_capacity) {
    ++stats_.dropped_queue;
    return;
  }
  const Instant start = std::max(event.at, port.busy_until);
  port.busy_until = start + event.serialization;
  port.finish_times.push_back(port.busy_until);
  event.at = port.busy_until + config_.one_way_delay + event.extra_delay;
  event.stage = Stage::kDelivery;
  Push(std::move(event));
}

std::vector<Datagram> SimulatedChannel::AdvanceClock(Instant to) {
  std::vector<Datagram> out;
  if (to < now_) return out;
  while (!events_.empty() && events_.front().at <= to) {
    Event e = Pop();
    if (e.stage == Stage::kSwitchArrival) {
      ProcessArrival(std::move(e));
      continue;
    }
    ++stats_.delivered;
    stats_.bytes_delivered += e.bytes.size();
    out.push_back(Datagram{e.from, e.to, e.at, std::move(e.bytes)});
  }
  now_ = to;
  return out;
}

std::vector<Datagram> SimulatedChannel::WaitUntil(Instant deadline) {
  std::vector<Datagram> out;
  while (!events_.empty() && events_.front().at <= deadline) {
    const Instant t = events_.front().at;
    if (events_.front().stage == Stage::kSwitchArrival) {
      ProcessArrival(Pop());
      continue;
    }
    // Deliver everything due at exactly t, then hand control back.
    now_ = std::max(now_, t);
    return AdvanceClock(t);
  }
  if (deadline != Instant::max()) now_ = std::max(now_, deadline);
  return out;
}

std::optional<Instant> SimulatedChannel::NextEventTime() const {
  if (events_.empty()) return std::nullopt;
  return events_.front().at;
}

}  // namespace ltp
