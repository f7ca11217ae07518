#include <map>
#include <memory>
#include <random>
#include <variant>
#include <vector>

#include <benchmark/benchmark.h>

#include "ltp/segmentation.h"
#include "ltp/sender.h"

namespace ltp {
namespace {

// One flow of range(0) segments through a network with a 20-30 us ACK
// delay and 1% loss, driven at the sender API; measures loss detection and
// queue handling per ACK.
void BM_SenderLossDetection(benchmark::State& state) {
  const size_t segments = static_cast<size_t>(state.range(0));
  auto data = std::make_shared<std::vector<uint8_t>>(segments * 1460, 1);
  const Segmentation layout = SegmentBuffer(*data, 4, {});
  uint64_t acks = 0;
  for (auto _ : state) {
    std::mt19937_64 rng(7);
    FlowSender s(1, data, layout, {});
    std::multimap<Instant, uint32_t> net;
    Instant now = Instant{} + std::chrono::seconds(1);
    while (!s.complete()) {
      now += std::chrono::microseconds(1);
      while (!net.empty() && net.begin()->first <= now) {
        benchmark::DoNotOptimize(s.OnAck(net.begin()->second, now));
        net.erase(net.begin());
        ++acks;
      }
      for (;;) {
        Emission e = s.NextPacket(now);
        auto* p = std::get_if<Packet>(&e);
        if (!p) break;
        if (rng() % 100 == 0) continue;
        const auto delay = std::chrono::microseconds(20 + rng() % 10);
        net.emplace(now + delay, p->header.seq_id);
      }
    }
  }
  state.counters["acks_per_s"] =
      benchmark::Counter(static_cast<double>(acks), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_SenderLossDetection)->Arg(64)->Arg(1024)->Arg(8192);

}  // namespace
}  // namespace ltp
