#include "ltp/lt_threshold.h"

#include <gtest/gtest.h>

#include "ltp/error.h"
#include "oracles.h"

namespace ltp {
namespace {

using std::chrono::milliseconds;

TEST(InitLtThresholdTest, MatchesFrozenValue) {
  const Duration lt =
      InitLtThreshold(milliseconds(1), uint64_t{98} << 20, 10e9);
  EXPECT_NEAR(ToMillis(lt), oracle::kInitLt98MbMs, 0.1);
  EXPECT_NEAR(ToMillis(lt), oracle::kInitLt98MbMs, 1e-6);
}

TEST(InitLtThresholdTest, EmptyModelIsOneAndAHalfRtprop) {
  EXPECT_EQ(InitLtThreshold(milliseconds(2), 0, 1e9), milliseconds(3));
}

TEST(InitLtThresholdTest, ZeroRtpropIsPureTransferTime) {
  EXPECT_NEAR(ToMillis(InitLtThreshold(Duration::zero(), 1'000'000, 8e9)),
              1.0, 1e-9);
}

TEST(InitLtThresholdTest, DegenerateBandwidthThrows) {
  for (double bw : {0.0, -1.0}) {
    try {
      InitLtThreshold(milliseconds(1), 100, bw);
      FAIL() << "expected kDegenerateBandwidth";
    } catch (const LtpError& e) {
      EXPECT_EQ(e.code(), ErrorCode::kDegenerateBandwidth);
    }
  }
}

TEST(LtThresholdsTest, KeepsShortestFullCompletion) {
  LtThresholds t(ProfileConstant(NetworkProfile::kDcn));
  t.InitLink(1, milliseconds(84));
  t.UpdateLtThreshold(1, milliseconds(80));
  EXPECT_EQ(t.lt(1), milliseconds(80));
  t.UpdateLtThreshold(1, milliseconds(72));
  EXPECT_EQ(t.lt(1), milliseconds(72));
  t.UpdateLtThreshold(1, milliseconds(90));
  EXPECT_EQ(t.lt(1), milliseconds(72));
}

TEST(LtThresholdsTest, DeadlineIsMaxPlusConstant) {
  LtThresholds t(milliseconds(30));
  t.InitLink(1, milliseconds(72));
  t.InitLink(2, milliseconds(80));
  t.InitLink(3, milliseconds(75));
  EXPECT_EQ(t.deadline(), milliseconds(110));
  EXPECT_EQ(t.link_count(), 3u);
}

TEST(LtThresholdsTest, InitLinkStartsNewEpoch) {
  LtThresholds t(milliseconds(30));
  t.InitLink(1, milliseconds(84));
  t.UpdateLtThreshold(1, milliseconds(50));
  t.InitLink(1, milliseconds(84));
  EXPECT_EQ(t.lt(1), milliseconds(84));
  EXPECT_FALSE(t.best_full_time(1).has_value());
  t.UpdateLtThreshold(1, milliseconds(90));
  EXPECT_EQ(t.lt(1), milliseconds(90));
}

TEST(LtThresholdsTest, UnknownLinkThrows) {
  LtThresholds t(milliseconds(30));
  EXPECT_THROW(t.lt(4), LtpError);
}

TEST(LtThresholdsTest, ProfileConstants) {
  EXPECT_EQ(ProfileConstant(NetworkProfile::kDcn), milliseconds(30));
  EXPECT_EQ(ProfileConstant(NetworkProfile::kWan), milliseconds(100));
}

}  // namespace
}  // namespace ltp
