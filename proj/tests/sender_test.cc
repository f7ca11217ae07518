#include "ltp/sender.h"

#include <algorithm>
#include <map>
#include <memory>
#include <random>
#include <variant>
#include <vector>

#include <gtest/gtest.h>

#include "ltp/error.h"
#include "scenarios.h"

namespace ltp {
namespace {

constexpr size_t kSeg = 8;

class SenderTest : public ::testing::Test {
 protected:
  FlowSender Make(size_t segments, std::vector<ByteRange> critical = {},
                  uint64_t seed = 1) {
    auto data = std::make_shared<std::vector<uint8_t>>(segments * kSeg, 7);
    SenderConfig config;
    config.seed = seed;
    config.congestion.max_segment_bytes = kSeg;
    // 1 ms x 576 kbit/s is 9 segments of 8 bytes.
    config.congestion.initial_btlbw_bps = 576e3;
    return FlowSender(1, data, SegmentBuffer(*data, 4, critical, kSeg),
                      config);
  }

  // Next packet, waiting out the pacer. nullopt if nothing can go.
  std::optional<Packet> Send(FlowSender& s) {
    for (int i = 0; i < 100; ++i) {
      Emission e = s.NextPacket(now_);
      if (auto* p = std::get_if<Packet>(&e)) return *p;
      if (auto* w = std::get_if<Paced>(&e)) {
        now_ += w->wait;
        continue;
      }
      return std::nullopt;
    }
    return std::nullopt;
  }

  std::vector<uint32_t> SendAll(FlowSender& s) {
    std::vector<uint32_t> out;
    while (auto p = Send(s)) out.push_back(p->header.seq_id);
    return out;
  }

  std::vector<uint32_t> Ack(FlowSender& s, uint32_t seq) {
    now_ += std::chrono::microseconds(1);
    return s.OnAck(seq, now_);
  }

  Instant now_ = Instant{} + std::chrono::seconds(1);
};

TEST_F(SenderTest, RegistrationFirstThenNormalQueueInOrder) {
  FlowSender s = Make(9);
  EXPECT_EQ(s.critical_queue(), std::deque<uint32_t>{kRegistrationSeq});
  EXPECT_EQ(s.normal_queue().size(), 9u);
  // The initial cap is 9 packets.
  EXPECT_EQ(SendAll(s), (std::vector<uint32_t>{kRegistrationSeq, 0, 1, 2, 3,
                                               4, 5, 6, 7}));
  EXPECT_TRUE(std::holds_alternative<CwndLimited>(s.NextPacket(now_)));
  EXPECT_EQ(s.normal_queue(), std::deque<uint32_t>{8});
}

TEST_F(SenderTest, CriticalSegmentsPrecedeNormalOnes) {
  FlowSender s = Make(6, {{16, 20}});
  EXPECT_EQ(SendAll(s),
            (std::vector<uint32_t>{kRegistrationSeq, 2, 0, 1, 3, 4, 5}));
}

TEST_F(SenderTest, ThirdLaterAckDeclaresLoss) {
  FlowSender s = Make(6);
  ASSERT_EQ(SendAll(s).size(), 7u);
  EXPECT_TRUE(Ack(s, kRegistrationSeq).empty());
  EXPECT_TRUE(Ack(s, 0).empty());
  EXPECT_TRUE(Ack(s, 1).empty());
  EXPECT_TRUE(Ack(s, 3).empty());
  EXPECT_TRUE(Ack(s, 4).empty());
  EXPECT_EQ(s.later_acked_count(2), 2);
  EXPECT_FALSE(s.declared_lost(2));
  EXPECT_EQ(Ack(s, 5), std::vector<uint32_t>{2});
  EXPECT_TRUE(s.declared_lost(2));
  EXPECT_EQ(s.retransmission_queue(), std::deque<uint32_t>{2});
}

TEST_F(SenderTest, TwoLaterAcksAreNotEnough) {
  FlowSender s = Make(4);
  SendAll(s);
  EXPECT_TRUE(Ack(s, 2).empty());
  EXPECT_TRUE(Ack(s, 3).empty());
  EXPECT_EQ(s.later_acked_count(1), 2);
  EXPECT_FALSE(s.declared_lost(1));
  EXPECT_FALSE(s.declared_lost(0));
}

TEST_F(SenderTest, LostNormalIsRetransmittedAfterNormalQueue) {
  FlowSender s = Make(12);
  ASSERT_EQ(SendAll(s).size(), 9u);  // reg, s0..s7
  for (uint32_t seq : {kRegistrationSeq, 0u, 1u, 2u, 4u, 5u}) {
    EXPECT_TRUE(Ack(s, seq).empty());
  }
  EXPECT_EQ(Ack(s, 6), std::vector<uint32_t>{3});
  EXPECT_EQ(s.retransmission_queue(), std::deque<uint32_t>{3});
  EXPECT_EQ(s.normal_queue().front(), 8u);

  std::vector<uint32_t> order;
  for (int i = 0; i < 20; ++i) {
    for (uint32_t seq : SendAll(s)) {
      order.push_back(seq);
      Ack(s, seq);
    }
  }
  ASSERT_FALSE(order.empty());
  // s7 was already in flight; s8..s11 go before the retransmission.
  const auto it = std::find(order.begin(), order.end(), 3u);
  ASSERT_NE(it, order.end());
  for (uint32_t seq : {8u, 9u, 10u, 11u}) {
    const auto jt = std::find(order.begin(), order.end(), seq);
    ASSERT_NE(jt, order.end());
    EXPECT_LT(jt - order.begin(), it - order.begin());
  }
}

TEST_F(SenderTest, LostCriticalGoesBackToCriticalQueue) {
  FlowSender s = Make(6, {{8, 12}});
  SendAll(s);
  for (uint32_t seq : {kRegistrationSeq, 0u, 2u, 3u}) Ack(s, seq);
  EXPECT_EQ(s.critical_queue(), std::deque<uint32_t>{1});
  EXPECT_TRUE(s.retransmission_queue().empty());
}

TEST_F(SenderTest, LateAckCancelsQueuedRetransmission) {
  FlowSender s = Make(6);
  SendAll(s);
  for (uint32_t seq : {kRegistrationSeq, 0u, 2u, 3u, 4u}) Ack(s, seq);
  ASSERT_EQ(s.retransmission_queue(), std::deque<uint32_t>{1});
  EXPECT_TRUE(Ack(s, 1).empty());
  EXPECT_TRUE(s.retransmission_queue().empty());
  EXPECT_TRUE(s.acked(1));
  EXPECT_EQ(s.stats().cancelled_retransmissions, 1u);
  for (uint32_t seq : SendAll(s)) EXPECT_NE(seq, 1u);
}

TEST_F(SenderTest, StopDiscardsNormalAndRetransmissionQueues) {
  FlowSender s = Make(20);
  SendAll(s);
  for (uint32_t seq : {kRegistrationSeq, 0u, 2u, 3u, 4u}) Ack(s, seq);
  ASSERT_FALSE(s.retransmission_queue().empty());
  ASSERT_FALSE(s.normal_queue().empty());
  s.OnStop();
  EXPECT_TRUE(s.stopped());
  EXPECT_TRUE(s.retransmission_queue().empty());
  EXPECT_TRUE(s.normal_queue().empty());
  EXPECT_GT(s.stats().discarded_on_stop, 0u);
  for (uint32_t seq : SendAll(s)) EXPECT_EQ(seq, kEndSeq);
}

TEST_F(SenderTest, StopStillDeliversCriticalSegments) {
  FlowSender s = Make(20, {{120, 124}});  // s15
  s.OnStop();
  std::vector<uint32_t> sent = SendAll(s);
  EXPECT_EQ(sent, (std::vector<uint32_t>{kRegistrationSeq, 15}));
  EXPECT_FALSE(s.complete());
  Ack(s, kRegistrationSeq);
  EXPECT_FALSE(s.complete());
  Ack(s, 15);
  EXPECT_TRUE(s.complete());
}

TEST_F(SenderTest, StopIsIdempotent) {
  FlowSender s = Make(10);
  SendAll(s);
  s.OnStop();
  const uint64_t discarded = s.stats().discarded_on_stop;
  s.OnStop();
  EXPECT_EQ(s.stats().discarded_on_stop, discarded);
  EXPECT_TRUE(s.normal_queue().empty());
}

TEST_F(SenderTest, EndFollowsDataAndCompletesFlow) {
  FlowSender s = Make(3);
  SendAll(s);
  for (uint32_t seq : {kRegistrationSeq, 0u, 1u, 2u}) Ack(s, seq);
  EXPECT_EQ(SendAll(s), std::vector<uint32_t>{kEndSeq});
  EXPECT_FALSE(s.complete());
  Ack(s, kEndSeq);
  EXPECT_TRUE(s.complete());
  EXPECT_TRUE(s.all_data_acked());
}

TEST_F(SenderTest, UnknownAndDuplicateAcks) {
  FlowSender s = Make(4);
  Send(s);
  try {
    s.OnAck(3, now_);
    FAIL() << "expected kUnknownSeq";
  } catch (const LtpError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownSeq);
  }
  Ack(s, kRegistrationSeq);
  EXPECT_TRUE(Ack(s, kRegistrationSeq).empty());
  EXPECT_EQ(s.stats().duplicate_acks, 1u);
  EXPECT_EQ(s.stats().acks, 1u);
}

TEST_F(SenderTest, RegistrationTimerResendsRegistration) {
  FlowSender s = Make(2);
  SendAll(s);
  now_ += std::chrono::seconds(1);
  std::optional<Packet> p = Send(s);
  ASSERT_TRUE(p.has_value());
  EXPECT_EQ(p->header.seq_id, kRegistrationSeq);
  EXPECT_GE(s.stats().timeouts, 1u);
}

TEST_F(SenderTest, RetransmissionTimeoutRecoversTailLoss) {
  FlowSender s = Make(2);
  SendAll(s);
  Ack(s, kRegistrationSeq);
  Ack(s, 0);
  // s1 is the tail: nothing later can ever be ACKed.
  now_ += std::chrono::seconds(1);
  std::optional<Packet> p = Send(s);
  ASSERT_TRUE(p.has_value());
  EXPECT_EQ(p->header.seq_id, 1u);
  EXPECT_TRUE(s.declared_lost(1) || s.stats().retransmissions > 0);
}

TEST(SenderLossOracleTest, MatchesBruteForceOnRandomTraces) {
  scenario::LossTraceStats stats;
  for (uint64_t seed = 1; seed <= 200; ++seed) {
    const std::string err = scenario::RunLossTrace(seed, &stats);
    ASSERT_TRUE(err.empty()) << err;
  }
  EXPECT_GT(stats.losses, 100u);
}

// Random drive checking queue priority and send-once for normal packets.
TEST(SenderPropertyTest, QueuePriorityAndSendOnce) {
  for (uint64_t seed = 1; seed <= 200; ++seed) {
    std::mt19937_64 rng(seed);
    const size_t segments = 1 + rng() % 40;
    auto data = std::make_shared<std::vector<uint8_t>>(segments * kSeg, 1);
    std::vector<ByteRange> critical;
    for (int i = 0; i < 3; ++i) {
      if (rng() % 2) {
        const size_t a = rng() % data->size();
        critical.push_back({a, a + 1});
      }
    }
    SenderConfig config;
    config.seed = seed;
    config.congestion.max_segment_bytes = kSeg;
    FlowSender s(2, data, SegmentBuffer(*data, 4, critical, kSeg), config);
    EventLog log;
    s.set_event_sink(&log);
    const Segmentation& layout = s.layout();
    std::map<uint32_t, int> sends;
    std::map<uint32_t, int> losses;
    size_t seen_losses = 0;
    std::vector<uint32_t> network;
    Instant now = Instant{} + std::chrono::seconds(1);
    for (int step = 0; step < 5000 && !s.complete(); ++step) {
      now += std::chrono::microseconds(5);
      if (network.empty() || rng() % 2) {
        Emission e = s.NextPacket(now);
        for (; seen_losses < log.losses.size(); ++seen_losses) {
          ++losses[log.losses[seen_losses].seq];
        }
        if (auto* p = std::get_if<Packet>(&e)) {
          const uint32_t seq = p->header.seq_id;
          ++sends[seq];
          const bool critical_pkt =
              seq >= layout.segments.size() ||
              layout.segments[seq].importance == Importance::kCritical;
          if (!critical_pkt) {
            ASSERT_TRUE(s.critical_queue().empty()) << "seed " << seed;
            if (sends[seq] > 1) {
              ASSERT_TRUE(s.normal_queue().empty()) << "seed " << seed;
            }
            ASSERT_LE(sends[seq], 1 + losses[seq]) << "seed " << seed;
          }
          if (rng() % 5) network.push_back(seq);
          continue;
        }
        if (network.empty()) continue;
      }
      const size_t k = rng() % network.size();
      const uint32_t seq = network[k];
      network.erase(network.begin() + static_cast<std::ptrdiff_t>(k));
      s.OnAck(seq, now);
      if (rng() % 50 == 0) s.OnStop();
    }
    EXPECT_TRUE(s.complete()) << "seed " << seed;
  }
}

}  // namespace
}  // namespace ltp
