#include <cerrno>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>

#include "json.hpp"

#include "ltp/error.h"
#include "ltp/experiment.h"

namespace ltp {
namespace {

using nlohmann::ordered_json;

std::string Fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// Milliseconds with nanosecond resolution; infinite durations print "inf".
std::string Ms(Duration d) {
  if (d == kInfiniteDuration) return "inf";
  return Fixed(ToMillis(d));
}

// Same values as the CSV columns, parsed back to numbers, so both formats
// agree digit for digit.
ordered_json MsJson(Duration d) {
  if (d == kInfiniteDuration) return nullptr;
  return ordered_json::parse(Ms(d));
}

ordered_json FixedJson(double v) { return ordered_json::parse(Fixed(v)); }

constexpr const char* kFlowColumns =
    "loss_rate,mode,epoch,batch,phase,worker,flow_id,fct_ms,elapsed_ms,"
    "close_reason,received_fraction,total_segments,received_segments,"
    "lt_threshold_ms,deadline_ms,transmissions,retransmissions,"
    "losses_declared,timeouts";

constexpr const char* kBatchColumns =
    "loss_rate,mode,epoch,batch,gather_ms,broadcast_ms,bst_ms";

constexpr const char* kSummaryColumns =
    "loss_rate,mode,batches,mean_bst_ms,max_bst_ms,throughput_gbps,"
    "mean_gather_fraction,all_received,early_closed,deadline_forced,"
    "gather_retransmissions,broadcast_retransmissions";

std::string Loss(double l) { return Fixed(l, 6); }

size_t Count(const std::map<CloseReason, size_t>& h, CloseReason r) {
  auto it = h.find(r);
  return it == h.end() ? 0 : it->second;
}

std::ofstream OpenOrThrow(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) {
    throw LtpError(ErrorCode::kIo,
                   "cannot open " + path + ": " + std::strerror(errno));
  }
  return f;
}

void CloseOrThrow(std::ofstream& f, const std::string& path) {
  f.close();
  if (!f) throw LtpError(ErrorCode::kIo, "write failed: " + path);
}

}  // namespace

void WriteFlowsCsv(std::ostream& out, const ExperimentReport& report) {
  out << kFlowColumns << "\n";
  for (const MetricsReport& run : report.runs) {
    for (const FlowRecord& f : run.flows) {
      out << Loss(run.loss_rate) << ',' << SyncModeName(run.mode) << ','
          << f.epoch << ',' << f.batch << ',' << PhaseName(f.phase) << ','
          << f.worker << ',' << f.flow_id << ',' << Ms(f.fct) << ','
          << Ms(f.elapsed) << ',' << CloseReasonName(f.reason) << ','
          << Fixed(f.received_fraction) << ',' << f.total_segments << ','
          << f.received_segments << ',' << Ms(f.lt_threshold) << ','
          << Ms(f.deadline) << ',' << f.send_stats.transmissions << ','
          << f.send_stats.retransmissions << ','
          << f.send_stats.losses_declared << ',' << f.send_stats.timeouts
          << "\n";
    }
  }
}

void WriteBatchesCsv(std::ostream& out, const ExperimentReport& report) {
  out << kBatchColumns << "\n";
  for (const MetricsReport& run : report.runs) {
    for (const BatchRecord& b : run.batches) {
      out << Loss(run.loss_rate) << ',' << SyncModeName(run.mode) << ','
          << b.epoch << ',' << b.batch << ',' << Ms(b.gather) << ','
          << Ms(b.broadcast) << ',' << Ms(b.bst()) << "\n";
    }
  }
}

void WriteSummaryCsv(std::ostream& out, const ExperimentReport& report) {
  out << kSummaryColumns << "\n";
  for (const MetricsReport& run : report.runs) {
    const auto hist = run.CloseHistogram(Phase::kGather);
    out << Loss(run.loss_rate) << ',' << SyncModeName(run.mode) << ','
        << run.batches.size() << ',' << Ms(run.MeanBst()) << ','
        << Ms(run.MaxBst()) << ',' << Fixed(run.ThroughputProxyBps() / 1e9)
        << ',' << Fixed(run.MeanReceivedFraction(Phase::kGather)) << ','
        << Count(hist, CloseReason::kAllReceived) << ','
        << Count(hist, CloseReason::kEarlyClosed) << ','
        << Count(hist, CloseReason::kDeadlineForced) << ','
        << run.TotalRetransmissions(Phase::kGather) << ','
        << run.TotalRetransmissions(Phase::kBroadcast) << "\n";
  }
}

void WriteFlowsJsonl(std::ostream& out, const ExperimentReport& report) {
  for (const MetricsReport& run : report.runs) {
    for (const FlowRecord& f : run.flows) {
      ordered_json j;
      j["loss_rate"] = FixedJson(run.loss_rate);
      j["mode"] = SyncModeName(run.mode);
      j["epoch"] = f.epoch;
      j["batch"] = f.batch;
      j["phase"] = PhaseName(f.phase);
      j["worker"] = f.worker;
      j["flow_id"] = f.flow_id;
      j["fct_ms"] = MsJson(f.fct);
      j["elapsed_ms"] = MsJson(f.elapsed);
      j["close_reason"] = CloseReasonName(f.reason);
      j["received_fraction"] = FixedJson(f.received_fraction);
      j["total_segments"] = f.total_segments;
      j["received_segments"] = f.received_segments;
      j["lt_threshold_ms"] = MsJson(f.lt_threshold);
      j["deadline_ms"] = MsJson(f.deadline);
      j["transmissions"] = f.send_stats.transmissions;
      j["retransmissions"] = f.send_stats.retransmissions;
      j["losses_declared"] = f.send_stats.losses_declared;
      j["timeouts"] = f.send_stats.timeouts;
      out << j.dump() << "\n";
    }
  }
}

void WriteBatchesJsonl(std::ostream& out, const ExperimentReport& report) {
  for (const MetricsReport& run : report.runs) {
    for (const BatchRecord& b : run.batches) {
      ordered_json j;
      j["loss_rate"] = FixedJson(run.loss_rate);
      j["mode"] = SyncModeName(run.mode);
      j["epoch"] = b.epoch;
      j["batch"] = b.batch;
      j["gather_ms"] = MsJson(b.gather);
      j["broadcast_ms"] = MsJson(b.broadcast);
      j["bst_ms"] = MsJson(b.bst());
      out << j.dump() << "\n";
    }
  }
}

void WriteSummaryJsonl(std::ostream& out, const ExperimentReport& report) {
  for (const MetricsReport& run : report.runs) {
    const auto hist = run.CloseHistogram(Phase::kGather);
    ordered_json j;
    j["loss_rate"] = FixedJson(run.loss_rate);
    j["mode"] = SyncModeName(run.mode);
    j["batches"] = run.batches.size();
    j["mean_bst_ms"] = MsJson(run.MeanBst());
    j["max_bst_ms"] = MsJson(run.MaxBst());
    j["throughput_gbps"] = FixedJson(run.ThroughputProxyBps() / 1e9);
    j["mean_gather_fraction"] =
        FixedJson(run.MeanReceivedFraction(Phase::kGather));
    j["all_received"] = Count(hist, CloseReason::kAllReceived);
    j["early_closed"] = Count(hist, CloseReason::kEarlyClosed);
    j["deadline_forced"] = Count(hist, CloseReason::kDeadlineForced);
    j["gather_retransmissions"] = run.TotalRetransmissions(Phase::kGather);
    j["broadcast_retransmissions"] =
        run.TotalRetransmissions(Phase::kBroadcast);
    out << j.dump() << "\n";
  }
}

ExportedFiles ExportReport(const ExperimentReport& report,
                           const std::string& dir, ExportFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw LtpError(ErrorCode::kIo,
                   "cannot create " + dir + ": " + ec.message());
  }
  const std::string ext = format == ExportFormat::kCsv ? ".csv" : ".jsonl";
  const std::filesystem::path base(dir);
  ExportedFiles files{(base / ("flows" + ext)).string(),
                      (base / ("batches" + ext)).string(),
                      (base / ("summary" + ext)).string()};
  auto write = [&](const std::string& path, auto csv, auto jsonl) {
    std::ofstream f = OpenOrThrow(path);
    if (format == ExportFormat::kCsv) {
      csv(f, report);
    } else {
      jsonl(f, report);
    }
    CloseOrThrow(f, path);
  };
  write(files.flows, WriteFlowsCsv, WriteFlowsJsonl);
  write(files.batches, WriteBatchesCsv, WriteBatchesJsonl);
  write(files.summary, WriteSummaryCsv, WriteSummaryJsonl);
  return files;
}

}  // namespace ltp
