#ifndef LTP_WIRE_H_
#define LTP_WIRE_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ltp/time.h"

namespace ltp {

// LTP header: 68 bits of fields followed by 4 zero pad bits, 9 bytes total.
//
//   flow_id  seq_id  importance  type  rtprop_q  btlbw_q  pad
//     16       24        2        2       12        12     4
//
// Fields are packed most-significant bit first.
inline constexpr size_t kHeaderBytes = 9;
inline constexpr size_t kMtuBytes = 1500;
inline constexpr size_t kIpUdpOverheadBytes = 28;
inline constexpr size_t kMaxDatagramBytes = kMtuBytes - kIpUdpOverheadBytes;
// Largest multiple of 4 that fits in a datagram after the LTP header.
inline constexpr size_t kMaxSegmentBytes =
    (kMaxDatagramBytes - kHeaderBytes) / 4 * 4;
static_assert(kMaxSegmentBytes == 1460);

inline constexpr uint32_t kMaxFlowId = 0xFFFF;
inline constexpr uint32_t kMaxSeqId = 0xFFFFFF;
inline constexpr uint16_t kMaxQuantized = 0x0FFF;

// Reserved sequence ids so control packets never share an ACK with data.
inline constexpr uint32_t kRegistrationSeq = 0xFFFFFF;
inline constexpr uint32_t kEndSeq = 0xFFFFFE;
inline constexpr uint32_t kMaxSegmentsPerFlow = kEndSeq;

enum class Importance : uint8_t {
  kNotCritical = 0b00,
  kCritical = 0b11,
};

enum class PacketType : uint8_t {
  kRegistration = 0b00,
  kData = 0b01,
  kAck = 0b10,
  kEnd = 0b11,
};

struct PacketHeader {
  uint16_t flow_id = 0;
  uint32_t seq_id = 0;      // 24 bits
  Importance importance = Importance::kNotCritical;
  PacketType type = PacketType::kRegistration;
  uint16_t rtprop_q = 0;    // 12 bits, 100 us units, 0 = unknown
  uint16_t btlbw_q = 0;     // 12 bits, 10 Mbit/s units, 0 = unknown

  bool operator==(const PacketHeader&) const = default;
};

using HeaderBytes = std::array<uint8_t, kHeaderBytes>;

// Throws LtpError(kInvalidArgument) if a field exceeds its bit width.
HeaderBytes EncodeHeader(const PacketHeader& header);

// Throws LtpError(kMalformedHeader) on short input, an undefined importance
// code (01, 10) or nonzero pad bits.
PacketHeader DecodeHeader(std::span<const uint8_t> bytes);

struct QuantizedCc {
  uint16_t rtprop_q = 0;
  uint16_t btlbw_q = 0;

  bool operator==(const QuantizedCc&) const = default;
};

inline constexpr Duration kRtpropUnit = std::chrono::microseconds(100);
inline constexpr double kBtlbwUnitBps = 10e6;

// Saturating quantization of the congestion estimates echoed in headers,
// rounded to the nearest unit. Positive inputs map to at least 1.
QuantizedCc QuantizeCc(Duration rtprop, double btlbw_bps);
Duration DequantizeRtprop(uint16_t rtprop_q);
double DequantizeBtlbw(uint16_t btlbw_q);

struct Registration {
  uint32_t total_segments = 0;
  uint32_t total_bytes = 0;

  bool operator==(const Registration&) const = default;
};

struct Packet {
  PacketHeader header;
  std::vector<uint8_t> payload;
};

std::vector<uint8_t> EncodeRegistrationPayload(const Registration& reg);
Registration DecodeRegistrationPayload(std::span<const uint8_t> payload);

// Header followed by payload. Throws LtpError(kOversizedDatagram) when the
// result would not fit in kMaxDatagramBytes.
std::vector<uint8_t> EncodePacket(const Packet& packet);

// Validates the payload role for the packet type: registration carries
// exactly 8 bytes, Ack and End carry none, Data carries 1..kMaxSegmentBytes.
Packet DecodePacket(std::span<const uint8_t> datagram);

}  // namespace ltp

#endif  // LTP_WIRE_H_
