#include "ltp/wire.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "ltp/error.h"

namespace ltp {
namespace {

void CheckWidth(uint64_t value, uint64_t max, const char* field) {
  if (value > max) {
    throw LtpError(ErrorCode::kInvalidArgument,
                   std::string(field) + " exceeds its field width");
  }
}

void PutU32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

uint32_t GetU32(std::span<const uint8_t> in) {
  return (uint32_t{in[0]} << 24) | (uint32_t{in[1]} << 16) |
         (uint32_t{in[2]} << 8) | uint32_t{in[3]};
}

}  // namespace

HeaderBytes EncodeHeader(const PacketHeader& h) {
  CheckWidth(h.seq_id, kMaxSeqId, "seq_id");
  CheckWidth(h.rtprop_q, kMaxQuantized, "rtprop_q");
  CheckWidth(h.btlbw_q, kMaxQuantized, "btlbw_q");
  if (h.importance != Importance::kCritical &&
      h.importance != Importance::kNotCritical) {
    throw LtpError(ErrorCode::kInvalidArgument, "undefined importance code");
  }

  // First 64 bits: flow(16) seq(24) importance(2) type(2) rtprop(12)
  // and the top 8 bits of btlbw. The final byte holds the low 4 bits of
  // btlbw followed by the zero pad nibble.
  const uint64_t hi = (uint64_t{h.flow_id} << 48) |
                      (uint64_t{h.seq_id} << 24) |
                      (uint64_t{static_cast<uint8_t>(h.importance)} << 22) |
                      (uint64_t{static_cast<uint8_t>(h.type)} << 20) |
                      (uint64_t{h.rtprop_q} << 8) | (uint64_t{h.btlbw_q} >> 4);
  HeaderBytes out{};
  for (int i = 0; i < 8; ++i) {
    out[i] = static_cast<uint8_t>(hi >> (56 - 8 * i));
  }
  out[8] = static_cast<uint8_t>((h.btlbw_q & 0x0F) << 4);
  return out;
}

PacketHeader DecodeHeader(std::span<const uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) {
    throw LtpError(ErrorCode::kMalformedHeader,
                   "need 9 bytes, got " + std::to_string(bytes.size()));
  }
  uint64_t hi = 0;
  for (int i = 0; i < 8; ++i) hi = (hi << 8) | bytes[i];
  const uint8_t last = bytes[8];
  if ((last & 0x0F) != 0) {
    throw LtpError(ErrorCode::kMalformedHeader, "nonzero pad bits");
  }
  const auto importance = static_cast<uint8_t>((hi >> 22) & 0x3);
  if (importance != 0b00 && importance != 0b11) {
    throw LtpError(ErrorCode::kMalformedHeader, "undefined importance code");
  }

  PacketHeader h;
  h.flow_id = static_cast<uint16_t>(hi >> 48);
  h.seq_id = static_cast<uint32_t>((hi >> 24) & kMaxSeqId);
  h.importance = static_cast<Importance>(importance);
  h.type = static_cast<PacketType>((hi >> 20) & 0x3);
  h.rtprop_q = static_cast<uint16_t>((hi >> 8) & kMaxQuantized);
  h.btlbw_q = static_cast<uint16_t>(((hi & 0xFF) << 4) | (last >> 4));
  return h;
}

QuantizedCc QuantizeCc(Duration rtprop, double btlbw_bps) {
  auto quantize = [](double ratio) -> uint16_t {
    if (!(ratio > 0)) return 0;
    // 0 means unknown, so a tiny positive estimate still reports one unit.
    return static_cast<uint16_t>(std::clamp(
        std::round(ratio), 1.0, static_cast<double>(kMaxQuantized)));
  };
  return QuantizedCc{
      quantize(static_cast<double>(rtprop.count()) /
               static_cast<double>(kRtpropUnit.count())),
      quantize(btlbw_bps / kBtlbwUnitBps)};
}

Duration DequantizeRtprop(uint16_t rtprop_q) { return kRtpropUnit * rtprop_q; }

double DequantizeBtlbw(uint16_t btlbw_q) { return btlbw_q * kBtlbwUnitBps; }

std::vector<uint8_t> EncodeRegistrationPayload(const Registration& reg) {
  std::vector<uint8_t> out;
  out.reserve(8);
  PutU32(out, reg.total_segments);
  PutU32(out, reg.total_bytes);
  return out;
}

Registration DecodeRegistrationPayload(std::span<const uint8_t> payload) {
  if (payload.size() != 8) {
    throw LtpError(ErrorCode::kMalformedPacket,
                   "registration payload must be 8 bytes");
  }
  return Registration{GetU32(payload.first(4)), GetU32(payload.subspan(4))};
}

std::vector<uint8_t> EncodePacket(const Packet& packet) {
  if (kHeaderBytes + packet.payload.size() > kMaxDatagramBytes) {
    throw LtpError(ErrorCode::kOversizedDatagram,
                   std::to_string(kHeaderBytes + packet.payload.size()) +
                       " bytes exceeds the datagram limit");
  }
  const HeaderBytes header = EncodeHeader(packet.header);
  std::vector<uint8_t> out(kHeaderBytes + packet.payload.size());
  std::copy(header.begin(), header.end(), out.begin());
  std::copy(packet.payload.begin(), packet.payload.end(),
            out.begin() + kHeaderBytes);
  return out;
}

Packet DecodePacket(std::span<const uint8_t> datagram) {
  Packet p;
  p.header = DecodeHeader(datagram);
  const auto payload = datagram.subspan(kHeaderBytes);
  switch (p.header.type) {
    case PacketType::kRegistration:
      if (payload.size() != 8) {
        throw LtpError(ErrorCode::kMalformedPacket,
                       "registration payload must be 8 bytes");
      }
      break;
    case PacketType::kAck:
    case PacketType::kEnd:
      if (!payload.empty()) {
        throw LtpError(ErrorCode::kMalformedPacket,
                       "ack/end payload must be empty");
      }
      break;
    case PacketType::kData:
      if (payload.empty() || payload.size() > kMaxSegmentBytes) {
        throw LtpError(ErrorCode::kMalformedPacket, "bad data payload length");
      }
      break;
  }
  p.payload.assign(payload.begin(), payload.end());
  return p;
}

}  // namespace ltp
