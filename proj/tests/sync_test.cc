#include "ltp/sync.h"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "ltp/error.h"
#include "ltp/sim_channel.h"
#include "oracles.h"
#include "scenarios.h"

namespace ltp {
namespace {

// Drops every transmission of one data segment from one node.
class DroppingChannel : public Channel {
 public:
  DroppingChannel(SimulatedChannel* inner, NodeId from, uint32_t seq)
      : inner_(inner), from_(from), seq_(seq) {}
  Instant Now() const override { return inner_->Now(); }
  SendOutcome Send(NodeId from, NodeId to,
                   std::span<const uint8_t> datagram) override {
    if (from == from_) {
      const PacketHeader h = DecodeHeader(datagram);
      if (h.type == PacketType::kData && h.seq_id == seq_) {
        ++dropped_;
        return SendOutcome::kDroppedRandom;
      }
    }
    return inner_->Send(from, to, datagram);
  }
  std::vector<Datagram> WaitUntil(Instant deadline) override {
    return inner_->WaitUntil(deadline);
  }
  bool Idle() const override { return inner_->Idle(); }
  int dropped() const { return dropped_; }

 private:
  SimulatedChannel* inner_;
  NodeId from_;
  uint32_t seq_;
  int dropped_ = 0;
};

SyncPlan TinyPlan() {
  SyncPlan plan;
  plan.n_workers = 2;
  plan.model_bytes = 16;
  plan.critical_edge_bytes = 0;
  plan.sender.congestion.max_segment_bytes = 8;
  return plan;
}

std::vector<GradientBuffer> TinyGradients() {
  return {GradientBuffer{{1, 2, 3, 4}}, GradientBuffer{{3, 2, 1, 0}}};
}

TEST(AggregateTest, LosslessMean) {
  SimulatedChannel channel({});
  SyncCluster cluster(TinyPlan(), &channel);
  cluster.StartEpoch();
  const GatherResult g = cluster.GatherRound(TinyGradients());
  EXPECT_EQ(g.aggregate.values, (std::vector<float>{2, 2, 2, 2}));
  EXPECT_TRUE(g.missing_segments[0].empty());
  EXPECT_TRUE(g.missing_segments[1].empty());
}

TEST(AggregateTest, MissingSegmentCountsAsZero) {
  SimulatedChannel inner({});
  DroppingChannel channel(&inner, SyncCluster::WorkerNode(1), 1);
  SyncCluster cluster(TinyPlan(), &channel);
  cluster.StartEpoch();
  const GatherResult g = cluster.GatherRound(TinyGradients());
  EXPECT_GT(channel.dropped(), 0);
  EXPECT_EQ(g.aggregate.values, (std::vector<float>{2, 2, 1.5f, 2}));
  EXPECT_EQ(g.missing_segments[1], std::vector<uint32_t>{1});
  EXPECT_EQ(g.flows[1].reason, CloseReason::kDeadlineForced);
  const auto want = oracle::BruteForceMean(
      {{1, 2, 3, 4}, {3, 2, 1, 0}}, {{}, {2, 3}});
  EXPECT_EQ(g.aggregate.values, want);
}

TEST(AggregateTest, LengthMismatchThrows) {
  std::vector<GradientBuffer> bufs = {GradientBuffer{{1, 2}},
                                      GradientBuffer{{1}}};
  EXPECT_THROW(Aggregate(bufs), LtpError);
}

TEST(AggregateTest, SumsInWorkerOrder) {
  std::vector<GradientBuffer> bufs = {GradientBuffer{{1e8f}},
                                      GradientBuffer{{1.0f}},
                                      GradientBuffer{{-1e8f}}};
  const float want = ((1e8f + 1.0f) + -1e8f) / 3.0f;
  EXPECT_EQ(Aggregate(bufs).values[0], want);
}

TEST(GradientBufferTest, FromBytesRequiresWholeFloats) {
  std::vector<uint8_t> bytes(6);
  EXPECT_THROW(GradientBuffer::FromBytes(bytes), LtpError);
  bytes.resize(8);
  EXPECT_EQ(GradientBuffer::FromBytes(bytes).values.size(), 2u);
}

TEST(GradientWorkloadTest, ValuesIndependentOfGenerationOrder) {
  GradientWorkload w(3);
  const GradientBuffer a = w.Generate(0, 1, 2, 1000);
  w.Generate(5, 5, 5, 10);
  EXPECT_EQ(w.Generate(0, 1, 2, 1000).values, a.values);
  EXPECT_NE(w.Generate(0, 1, 3, 1000).values, a.values);
  double sum = 0;
  double sq = 0;
  const GradientBuffer big = w.Generate(0, 0, 0, 100000);
  for (float v : big.values) {
    sum += v;
    sq += double{v} * v;
  }
  EXPECT_NEAR(sum / 1e5, 0.0, 0.02);
  EXPECT_NEAR(sq / 1e5, 1.0, 0.03);
}

TEST(BroadcastTest, ExactUnderLossAndNeverEarlyClosed) {
  ChannelConfig c;
  c.loss_rate = 0.05;
  c.seed = 12;
  SimulatedChannel channel(c);
  SyncPlan plan;
  plan.n_workers = 4;
  plan.model_bytes = 200000;
  SyncCluster cluster(plan, &channel);
  cluster.StartEpoch();
  const GradientBuffer agg = GradientWorkload(1).Generate(0, 0, 0, 50000);
  const BroadcastResult b = cluster.BroadcastRound(agg);
  ASSERT_EQ(b.received.size(), 4u);
  for (const GradientBuffer& got : b.received) {
    EXPECT_EQ(std::memcmp(got.values.data(), agg.values.data(),
                          agg.size_bytes()),
              0);
  }
  for (const FlowRecord& f : b.flows) {
    EXPECT_EQ(f.reason, CloseReason::kAllReceived);
    EXPECT_EQ(f.phase, Phase::kBroadcast);
  }
}

TEST(TrainingSimTest, SingleLosslessBatch) {
  SimulatedChannel channel({});
  SyncPlan plan;
  plan.n_workers = 2;
  plan.model_bytes = 100000;
  plan.batches_per_epoch = 1;
  const MetricsReport r = RunTrainingSim(plan, GradientWorkload(1), &channel);
  ASSERT_EQ(r.batches.size(), 1u);
  ASSERT_EQ(r.flows.size(), 4u);
  for (const FlowRecord& f : r.flows) {
    EXPECT_EQ(f.reason, CloseReason::kAllReceived);
    EXPECT_EQ(f.received_fraction, 1.0);
  }
  EXPECT_GT(r.batches[0].bst(), Duration::zero());
}

TEST(TrainingSimTest, NewEpochResetsThresholdToInitFormula) {
  ChannelConfig c;
  c.loss_rate = 0.01;
  SimulatedChannel channel(c);
  SyncPlan plan;
  plan.n_workers = 2;
  plan.model_bytes = 400000;
  SyncCluster cluster(plan, &channel);
  GradientWorkload work(2);
  for (size_t epoch = 0; epoch < 2; ++epoch) {
    cluster.StartEpoch();
    for (size_t w = 0; w < 2; ++w) {
      const auto echo = cluster.ps().LastEcho(SyncCluster::WorkerNode(w));
      const Duration want =
          echo ? InitLtThreshold(DequantizeRtprop(echo->rtprop_q),
                                 plan.model_bytes,
                                 DequantizeBtlbw(echo->btlbw_q))
               : InitLtThreshold(plan.sender.congestion.initial_rtprop,
                                 plan.model_bytes,
                                 plan.sender.congestion.initial_btlbw_bps);
      EXPECT_EQ(cluster.thresholds().lt(static_cast<uint32_t>(w)), want);
      EXPECT_FALSE(cluster.thresholds()
                       .best_full_time(static_cast<uint32_t>(w))
                       .has_value());
      EXPECT_EQ(echo.has_value(), epoch > 0);
    }
    for (size_t b = 0; b < 2; ++b) {
      std::vector<GradientBuffer> g = {work.Generate(epoch, b, 0, 100000),
                                       work.Generate(epoch, b, 1, 100000)};
      cluster.BroadcastRound(cluster.GatherRound(g).aggregate);
    }
  }
}

TEST(ValueIndependenceTest, DropsDependOnlyOnChannel) {
  SyncPlan plan;
  plan.n_workers = 4;
  plan.model_bytes = 400000;
  const size_t elements = plan.model_bytes / 4;
  GradientWorkload work(5);
  std::vector<GradientBuffer> a;
  std::vector<GradientBuffer> b;
  std::vector<size_t> perm(elements);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
  for (size_t w = 0; w < plan.n_workers; ++w) {
    a.push_back(work.Generate(0, 0, w, elements));
    GradientBuffer p;
    p.values.resize(elements);
    for (size_t i = 0; i < elements; ++i) p.values[i] = a.back().values[perm[i]];
    b.push_back(std::move(p));
  }
  auto run = [&](const std::vector<GradientBuffer>& g) {
    ChannelConfig c;
    c.loss_rate = 0.02;
    c.seed = 77;
    SimulatedChannel channel(c);
    SyncCluster cluster(plan, &channel);
    cluster.StartEpoch();
    std::vector<std::vector<uint32_t>> missing;
    for (int round = 0; round < 3; ++round) {
      GatherResult r = cluster.GatherRound(g);
      missing.insert(missing.end(), r.missing_segments.begin(),
                     r.missing_segments.end());
    }
    return missing;
  };
  const auto ma = run(a);
  EXPECT_EQ(ma, run(b));
  size_t dropped = 0;
  for (const auto& m : ma) dropped += m.size();
  EXPECT_GT(dropped, 0u);
}

TEST(SyncPlanTest, ValidationNamesField) {
  SyncPlan plan;
  plan.n_workers = 0;
  try {
    ValidateSyncPlan(plan);
    FAIL() << "expected kConfig";
  } catch (const LtpError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
    EXPECT_NE(std::string(e.what()).find("workers"), std::string::npos);
  }
  plan = {};
  plan.pct_threshold = 1.5;
  EXPECT_THROW(ValidateSyncPlan(plan), LtpError);
  plan = {};
  plan.sender.congestion.max_segment_bytes = 2;
  EXPECT_THROW(ValidateSyncPlan(plan), LtpError);
  EXPECT_NO_THROW(ValidateSyncPlan(SyncPlan{}));
}

TEST(EarlyCloseContractTest, LossyTrainingCloses) {
  ChannelConfig c;
  c.loss_rate = 0.01;
  c.seed = 3;
  SimulatedChannel channel(c);
  SyncPlan plan;
  plan.n_workers = 4;
  plan.model_bytes = 1 << 20;
  plan.batches_per_epoch = 3;
  EventLog log;
  RunTrainingSim(plan, GradientWorkload(1), &channel, &log);
  ASSERT_FALSE(log.closes.empty());
  for (const CloseRecord& r : log.closes) {
    const std::string err = scenario::CheckClose(r);
    EXPECT_TRUE(err.empty()) << err;
  }
  const std::string err = scenario::CheckCongestionLog(log);
  EXPECT_TRUE(err.empty()) << err;
}

}  // namespace
}  // namespace ltp
