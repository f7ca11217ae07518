#include "ltp/experiment.h"

#include <bit>
#include <memory>
#include <string>

#include "ltp/error.h"
#include "ltp/udp_channel.h"

namespace ltp {

void ValidateExperimentSpec(const ExperimentSpec& spec) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw LtpError(ErrorCode::kConfig, field + ": " + why);
  };
  if (spec.loss_grid.empty()) fail("loss", "grid is empty");
  for (double l : spec.loss_grid) {
    if (!(l >= 0.0 && l <= 1.0)) {
      fail("loss", "rate " + std::to_string(l) + " outside [0, 1]");
    }
  }
  if (spec.modes.empty()) fail("mode", "no modes selected");
  if (spec.batches == 0) fail("batches", "must be at least 1");
  ChannelConfig c = spec.channel;
  c.loss_rate = 0.0;
  ValidateChannelConfig(c);
  SyncPlan plan;
  plan.n_workers = spec.n_workers;
  plan.model_bytes = spec.model_bytes;
  plan.epochs = spec.epochs;
  plan.batches_per_epoch = spec.batches;
  plan.pct_threshold = spec.pct_threshold;
  plan.sender.congestion = spec.congestion;
  ValidateSyncPlan(plan);
}

uint64_t ChannelSeedFor(const ExperimentSpec& spec, double loss_rate) {
  return MixSeed(spec.seed, std::bit_cast<uint64_t>(loss_rate));
}

MetricsReport RunGridPoint(const ExperimentSpec& spec, double loss_rate,
                           SyncMode mode, EventSink* sink) {
  SyncPlan plan;
  plan.n_workers = spec.n_workers;
  plan.model_bytes = spec.model_bytes;
  plan.epochs = spec.epochs;
  plan.batches_per_epoch = spec.batches;
  plan.profile = spec.profile;
  plan.pct_threshold = spec.pct_threshold;
  plan.mode = mode;
  plan.sender.congestion = spec.congestion;
  plan.seed = spec.seed;
  const GradientWorkload workload(spec.seed);
  const uint64_t channel_seed = ChannelSeedFor(spec, loss_rate);

  MetricsReport report;
  if (spec.real_udp) {
    UdpOptions opts;
    opts.loss_rate = loss_rate;
    opts.seed = channel_seed;
    UdpChannel channel(opts);
    channel.BindLocal(SyncCluster::kPsNode);
    for (size_t w = 0; w < spec.n_workers; ++w) {
      channel.BindLocal(SyncCluster::WorkerNode(w));
    }
    report = RunTrainingSim(plan, workload, &channel, sink);
  } else {
    ChannelConfig config = spec.channel;
    config.loss_rate = loss_rate;
    config.seed = channel_seed;
    SimulatedChannel channel(config);
    report = RunTrainingSim(plan, workload, &channel, sink);
  }
  report.loss_rate = loss_rate;
  return report;
}

ExperimentReport RunExperiment(
    const ExperimentSpec& spec,
    const std::function<void(const MetricsReport&)>& on_run) {
  ValidateExperimentSpec(spec);
  ExperimentReport out;
  for (double loss : spec.loss_grid) {
    for (SyncMode mode : spec.modes) {
      out.runs.push_back(RunGridPoint(spec, loss, mode));
      if (on_run) on_run(out.runs.back());
    }
  }
  return out;
}

}  // namespace ltp
