#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "ltp/wire.h"

namespace ltp {
namespace {

std::vector<PacketHeader> RandomHeaders(size_t n) {
  std::mt19937_64 rng(1);
  std::vector<PacketHeader> out(n);
  for (PacketHeader& h : out) {
    h.flow_id = static_cast<uint16_t>(rng());
    h.seq_id = static_cast<uint32_t>(rng() & kMaxSeqId);
    h.importance = rng() % 2 ? Importance::kCritical : Importance::kNotCritical;
    h.type = static_cast<PacketType>(rng() % 4);
    h.rtprop_q = static_cast<uint16_t>(rng() & kMaxQuantized);
    h.btlbw_q = static_cast<uint16_t>(rng() & kMaxQuantized);
  }
  return out;
}

void BM_EncodeHeader(benchmark::State& state) {
  const auto headers = RandomHeaders(1024);
  size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(EncodeHeader(headers[i++ & 1023]));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_EncodeHeader);

void BM_DecodeHeader(benchmark::State& state) {
  std::vector<HeaderBytes> encoded;
  for (const PacketHeader& h : RandomHeaders(1024)) {
    encoded.push_back(EncodeHeader(h));
  }
  size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(DecodeHeader(encoded[i++ & 1023]));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_DecodeHeader);

void BM_PacketRoundtrip(benchmark::State& state) {
  Packet p;
  p.header.type = PacketType::kData;
  p.header.seq_id = 42;
  p.payload.assign(kMaxSegmentBytes, 0x5A);
  for (auto _ : state) {
    benchmark::DoNotOptimize(DecodePacket(EncodePacket(p)));
  }
  state.SetBytesProcessed(state.iterations() * kMaxSegmentBytes);
}
BENCHMARK(BM_PacketRoundtrip);

}  // namespace
}  // namespace ltp
