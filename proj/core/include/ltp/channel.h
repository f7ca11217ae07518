#ifndef LTP_CHANNEL_H_
#define LTP_CHANNEL_H_

#include <cstdint>
#include <span>
#include <vector>

#include "ltp/time.h"

namespace ltp {

using NodeId = uint32_t;

struct Datagram {
  NodeId from = 0;
  NodeId to = 0;
  Instant delivered_at{};
  std::vector<uint8_t> bytes;
};

enum class SendOutcome {
  kAccepted,
  kDroppedRandom,     // injected non-congestion loss
  kDroppedQueueFull,  // drop-tail overflow at the sender's NIC queue
};

// Datagram substrate shared by the simulated network and live UDP sockets.
class Channel {
 public:
  virtual ~Channel() = default;

  virtual Instant Now() const = 0;

  // Throws LtpError(kOversizedDatagram) for datagrams over kMaxDatagramBytes.
  virtual SendOutcome Send(NodeId from, NodeId to,
                           std::span<const uint8_t> datagram) = 0;

  // Waits until at least one datagram is delivered or `deadline` passes and
  // returns whatever was delivered. A simulated channel advances its
  // virtual clock instead of sleeping.
  virtual std::vector<Datagram> WaitUntil(Instant deadline) = 0;

  // True when nothing can ever arrive without further sends (only a
  // simulated channel can know this).
  virtual bool Idle() const { return false; }
};

}  // namespace ltp

#endif  // LTP_CHANNEL_H_
