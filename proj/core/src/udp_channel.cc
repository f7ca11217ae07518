#include "ltp/udp_channel.h"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "ltp/error.h"
#include "ltp/wire.h"

namespace ltp {
namespace {

[[noreturn]] void ThrowErrno(const std::string& what) {
  throw LtpError(ErrorCode::kIo, what + ": " + std::strerror(errno));
}

sockaddr_in Resolve(const std::string& host, uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_DGRAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res) {
    throw LtpError(ErrorCode::kIo, "cannot resolve " + host);
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return addr;
}

}  // namespace

UdpChannel::UdpChannel(UdpOptions options)
    : options_(options), rng_(options.seed) {
  if (!(options_.loss_rate >= 0.0 && options_.loss_rate <= 1.0)) {
    throw LtpError(ErrorCode::kConfig, "udp.loss_rate must be within [0, 1]");
  }
}

UdpChannel::~UdpChannel() {
  for (const Local& l : locals_) close(l.fd);
}

uint64_t UdpChannel::AddrKey(const sockaddr_in& addr) {
  return (static_cast<uint64_t>(ntohl(addr.sin_addr.s_addr)) << 16) |
         ntohs(addr.sin_port);
}

uint16_t UdpChannel::BindLocal(NodeId id, const std::string& host,
                               uint16_t port) {
  int fd = socket(AF_INET, SOCK_DGRAM, 0);
  if (fd < 0) ThrowErrno("socket");
  setsockopt(fd, SOL_SOCKET, SO_RCVBUF, &options_.receive_buffer_bytes,
             sizeof(int));
  setsockopt(fd, SOL_SOCKET, SO_SNDBUF, &options_.send_buffer_bytes,
             sizeof(int));
  sockaddr_in addr = Resolve(host, port);
  if (bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    close(fd);
    ThrowErrno("bind " + host + ":" + std::to_string(port));
  }
  fcntl(fd, F_SETFL, fcntl(fd, F_GETFL) | O_NONBLOCK);
  socklen_t len = sizeof(addr);
  getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  if (addr.sin_addr.s_addr == htonl(INADDR_ANY)) {
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  }
  std::lock_guard<std::mutex> lock(mu_);
  locals_.push_back(Local{id, fd});
  addrs_[id] = addr;
  ids_by_addr_[AddrKey(addr)] = id;
  return ntohs(addr.sin_port);
}

void UdpChannel::AddPeer(NodeId id, const std::string& host, uint16_t port) {
  sockaddr_in addr = Resolve(host, port);
  std::lock_guard<std::mutex> lock(mu_);
  addrs_[id] = addr;
  ids_by_addr_[AddrKey(addr)] = id;
}

uint16_t UdpChannel::LocalPort(NodeId id) const {
  std::lock_guard<std::mutex> lock(mu_);
  for (const Local& l : locals_) {
    if (l.id == id) return ntohs(addrs_.at(id).sin_port);
  }
  throw LtpError(ErrorCode::kInvalidArgument,
                 "node " + std::to_string(id) + " is not bound locally");
}

std::vector<NodeId> UdpChannel::Peers() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<NodeId> out;
  for (const auto& [id, addr] : addrs_) out.push_back(id);
  return out;
}

NodeId UdpChannel::PeerFor(const sockaddr_in& addr) {
  auto it = ids_by_addr_.find(AddrKey(addr));
  if (it != ids_by_addr_.end()) return it->second;
  NodeId id = next_learned_id_++;
  addrs_[id] = addr;
  ids_by_addr_[AddrKey(addr)] = id;
  return id;
}

SendOutcome UdpChannel::Send(NodeId from, NodeId to,
                             std::span<const uint8_t> datagram) {
  if (datagram.size() > kMaxDatagramBytes) {
    throw LtpError(ErrorCode::kOversizedDatagram,
                   std::to_string(datagram.size()) + " byte datagram");
  }
  int fd = -1;
  sockaddr_in dest{};
  {
    std::lock_guard<std::mutex> lock(mu_);
    ++sent_;
    const double draw =
        static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    if (draw < options_.loss_rate) {
      ++dropped_random_;
      return SendOutcome::kDroppedRandom;
    }
    for (const Local& l : locals_) {
      if (l.id == from) fd = l.fd;
    }
    auto it = addrs_.find(to);
    if (fd < 0 || it == addrs_.end()) {
      throw LtpError(ErrorCode::kInvalidArgument,
                     "no route " + std::to_string(from) + " -> " +
                         std::to_string(to));
    }
    dest = it->second;
  }
  for (;;) {
    ssize_t n = sendto(fd, datagram.data(), datagram.size(), 0,
                       reinterpret_cast<const sockaddr*>(&dest), sizeof(dest));
    if (n >= 0) return SendOutcome::kAccepted;
    if (errno == EINTR) continue;
    // A full socket buffer is congestion loss as far as the protocol cares.
    if (errno == EAGAIN || errno == EWOULDBLOCK || errno == ENOBUFS) {
      return SendOutcome::kDroppedQueueFull;
    }
    // An ICMP unreachable from an earlier datagram surfaces here; drop.
    if (errno == ECONNREFUSED) return SendOutcome::kDroppedQueueFull;
    ThrowErrno("sendto");
  }
}

void UdpChannel::DrainSocket(const Local& local, std::vector<Datagram>* out) {
  uint8_t buf[kMaxDatagramBytes + 64];
  for (;;) {
    sockaddr_in src{};
    socklen_t len = sizeof(src);
    ssize_t n = recvfrom(local.fd, buf, sizeof(buf), 0,
                         reinterpret_cast<sockaddr*>(&src), &len);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == ECONNREFUSED) continue;
      return;
    }
    Datagram d;
    {
      std::lock_guard<std::mutex> lock(mu_);
      d.from = PeerFor(src);
    }
    d.to = local.id;
    d.delivered_at = Clock::now();
    d.bytes.assign(buf, buf + n);
    out->push_back(std::move(d));
  }
}

std::vector<Datagram> UdpChannel::WaitUntil(Instant deadline) {
  std::vector<Local> locals;
  {
    std::lock_guard<std::mutex> lock(mu_);
    locals = locals_;
  }
  std::vector<pollfd> fds;
  for (const Local& l : locals) fds.push_back(pollfd{l.fd, POLLIN, 0});
  std::vector<Datagram> out;
  for (;;) {
    const Instant now = Clock::now();
    int timeout_ms = 0;
    if (deadline > now) {
      const auto left = deadline == Instant::max()
                            ? std::chrono::milliseconds(1000)
                            : std::chrono::ceil<std::chrono::milliseconds>(
                                  deadline - now);
      timeout_ms = static_cast<int>(
          std::min<int64_t>(left.count(), 1000));
    }
    int rc = poll(fds.data(), fds.size(), timeout_ms);
    if (rc < 0 && errno != EINTR) ThrowErrno("poll");
    for (size_t i = 0; i < fds.size(); ++i) {
      if (fds[i].revents & (POLLIN | POLLERR)) DrainSocket(locals[i], &out);
    }
    if (!out.empty() || Clock::now() >= deadline) return out;
  }
}

}  // namespace ltp
