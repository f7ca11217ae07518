#ifndef LTP_UDP_CHANNEL_H_
#define LTP_UDP_CHANNEL_H_

#include <netinet/in.h>

#include <cstdint>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "ltp/channel.h"

namespace ltp {

struct UdpOptions {
  // Injected non-congestion loss applied before sendto(), seeded.
  double loss_rate = 0.0;
  uint64_t seed = 1;
  int receive_buffer_bytes = 8 << 20;
  int send_buffer_bytes = 8 << 20;
};

// Live UDP sockets. Any number of local nodes may be bound in one process;
// remote peers are registered by address, or learned from the source of the
// first datagram they send (assigned ids starting at kFirstLearnedId).
class UdpChannel : public Channel {
 public:
  static constexpr NodeId kFirstLearnedId = 1u << 20;

  explicit UdpChannel(UdpOptions options = {});
  ~UdpChannel() override;
  UdpChannel(const UdpChannel&) = delete;
  UdpChannel& operator=(const UdpChannel&) = delete;

  // Binds a socket for local node `id`. Port 0 picks an ephemeral port.
  // Returns the bound port. Throws LtpError(kIo).
  uint16_t BindLocal(NodeId id, const std::string& host = "127.0.0.1",
                     uint16_t port = 0);
  void AddPeer(NodeId id, const std::string& host, uint16_t port);

  uint16_t LocalPort(NodeId id) const;
  std::vector<NodeId> Peers() const;

  Instant Now() const override { return Clock::now(); }
  // Safe to call concurrently.
  SendOutcome Send(NodeId from, NodeId to,
                   std::span<const uint8_t> datagram) override;
  std::vector<Datagram> WaitUntil(Instant deadline) override;

  uint64_t sent() const { return sent_; }
  uint64_t dropped_random() const { return dropped_random_; }

 private:
  struct Local {
    NodeId id;
    int fd;
  };
  static uint64_t AddrKey(const sockaddr_in& addr);
  NodeId PeerFor(const sockaddr_in& addr);
  void DrainSocket(const Local& local, std::vector<Datagram>* out);

  UdpOptions options_;
  mutable std::mutex mu_;
  std::vector<Local> locals_;
  std::map<NodeId, sockaddr_in> addrs_;
  std::map<uint64_t, NodeId> ids_by_addr_;
  NodeId next_learned_id_ = kFirstLearnedId;
  std::mt19937_64 rng_;
  uint64_t sent_ = 0;
  uint64_t dropped_random_ = 0;
};

}  // namespace ltp

#endif  // LTP_UDP_CHANNEL_H_
