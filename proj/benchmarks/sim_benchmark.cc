#include <vector>

#include <benchmark/benchmark.h>

#include "ltp/sim_channel.h"
#include "ltp/sync.h"

namespace ltp {
namespace {

// One gather plus broadcast round on the simulated network.
void BM_SimulatedRound(benchmark::State& state) {
  SyncPlan plan;
  plan.n_workers = static_cast<size_t>(state.range(0));
  plan.model_bytes = static_cast<size_t>(state.range(1)) << 10;
  plan.batches_per_epoch = 1;
  const GradientWorkload workload(1);
  for (auto _ : state) {
    ChannelConfig c;
    c.loss_rate = 0.01;
    SimulatedChannel channel(c);
    benchmark::DoNotOptimize(RunTrainingSim(plan, workload, &channel));
  }
  state.SetBytesProcessed(state.iterations() * 2 *
                          static_cast<int64_t>(plan.n_workers * plan.model_bytes));
}
BENCHMARK(BM_SimulatedRound)
    ->Args({8, 256})
    ->Args({8, 8192})
    ->Unit(benchmark::kMillisecond);

void BM_ChannelSendDeliver(benchmark::State& state) {
  const std::vector<uint8_t> datagram(1472, 0);
  for (auto _ : state) {
    SimulatedChannel ch({});
    for (int i = 0; i < 1000; ++i) ch.Send(1 + i % 8, 0, datagram);
    benchmark::DoNotOptimize(ch.AdvanceClock(Instant{} + std::chrono::seconds(1)));
  }
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_ChannelSendDeliver);

}  // namespace
}  // namespace ltp
