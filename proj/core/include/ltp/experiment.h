#ifndef LTP_EXPERIMENT_H_
#define LTP_EXPERIMENT_H_

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ltp/sim_channel.h"
#include "ltp/sync.h"

namespace ltp {

struct ExperimentSpec {
  size_t n_workers = 8;
  size_t model_bytes = 8u << 20;
  std::vector<double> loss_grid = {0.0, 0.0001, 0.001, 0.005, 0.01};
  size_t batches = 20;
  size_t epochs = 1;
  std::vector<SyncMode> modes = {SyncMode::kLossTolerant, SyncMode::kReliable};
  NetworkProfile profile = NetworkProfile::kDcn;
  double pct_threshold = 0.8;
  // loss_rate and seed are overridden per grid point.
  ChannelConfig channel;
  CongestionConfig congestion;
  bool real_udp = false;
  uint64_t seed = 1;
};

// Throws LtpError(kConfig) naming the offending field.
void ValidateExperimentSpec(const ExperimentSpec& spec);

struct ExperimentReport {
  std::vector<MetricsReport> runs;
};

// Both modes at one loss rate see identical channel randomness.
uint64_t ChannelSeedFor(const ExperimentSpec& spec, double loss_rate);

MetricsReport RunGridPoint(const ExperimentSpec& spec, double loss_rate,
                           SyncMode mode, EventSink* sink = nullptr);

// Runs every (loss rate, mode) pair in grid order.
ExperimentReport RunExperiment(
    const ExperimentSpec& spec,
    const std::function<void(const MetricsReport&)>& on_run = {});

enum class ExportFormat { kCsv, kJsonl };

struct ExportedFiles {
  std::string flows;
  std::string batches;
  std::string summary;
};

// Writes flows, batches and summary files into `dir` (created if missing).
// Throws LtpError(kIo) naming the path on failure.
ExportedFiles ExportReport(const ExperimentReport& report,
                           const std::string& dir, ExportFormat format);

void WriteFlowsCsv(std::ostream& out, const ExperimentReport& report);
void WriteBatchesCsv(std::ostream& out, const ExperimentReport& report);
void WriteSummaryCsv(std::ostream& out, const ExperimentReport& report);
void WriteFlowsJsonl(std::ostream& out, const ExperimentReport& report);
void WriteBatchesJsonl(std::ostream& out, const ExperimentReport& report);
void WriteSummaryJsonl(std::ostream& out, const ExperimentReport& report);

}  // namespace ltp

#endif  // LTP_EXPERIMENT_H_
