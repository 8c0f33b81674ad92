#pragma once

// Reliable ordered frame transports: an in-process loopback (deterministic,
// simulated latency, fault injection) and TCP sockets on localhost.

#include "qkdlink/service/frame.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qkdlink::service {

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Side : std::uint8_t { alice = 0, bob = 1 };

inline const char* to_string(Side s) { return s == Side::alice ? "alice" : "bob"; }

/// Every frame put on the wire, tagged with its sender. Serialized as
/// repeated (sender u8, frame bytes).
class Transcript {
 public:
  void record(Side from, std::span<const std::uint8_t> bytes) {
    std::lock_guard lock(mutex_);
    data_.push_back(static_cast<std::uint8_t>(from));
    data_.insert(data_.end(), bytes.begin(), bytes.end());
    ++frames_;
  }
  std::vector<std::uint8_t> bytes() const {
    std::lock_guard lock(mutex_);
    return data_;
  }
  std::size_t frames() const {
    std::lock_guard lock(mutex_);
    return frames_;
  }

 private:
  mutable std::mutex mutex_;
  std::vector<std::uint8_t> data_;
  std::size_t frames_ = 0;
};

class Endpoint {
 public:
  virtual ~Endpoint() = default;
  virtual void send(const Frame& f) = 0;
  /// Next frame from the peer. Loopback returns nullopt when nothing has
  /// arrived yet; sockets block. Throws TransportError when the link is gone.
  virtual std::optional<Frame> receive() = 0;
  virtual void close() = 0;

  void set_transcript(Transcript* t, Side side) {
    transcript_ = t;
    side_ = side;
  }

 protected:
  void record(std::span<const std::uint8_t> bytes) {
    if (transcript_) transcript_->record(side_, bytes);
  }

  Transcript* transcript_ = nullptr;
  Side side_ = Side::alice;
};

struct LoopbackOptions {
  double latency_s = 0.0;
  /// Break the link once this many frames have been sent (both directions).
  std::optional<std::uint64_t> fail_after_frames;
};

/// Shared medium of a loopback pair with its own simulated clock.
class LoopbackLink {
 public:
  explicit LoopbackLink(LoopbackOptions o) : options_(o) {}

  double now() const { return now_; }
  void advance(double dt) { now_ += dt; }
  std::uint64_t frames_sent() const { return sent_; }
  bool broken() const { return broken_; }

  /// Moves the clock to the earliest pending delivery; false if none.
  bool advance_to_next_delivery() {
    std::optional<double> t;
    for (const auto& q : queues_)
      if (!q.empty() && (!t || q.front().deliver_at < *t)) t = q.front().deliver_at;
    if (!t) return false;
    now_ = std::max(now_, *t);
    return true;
  }

  void push(Side from, std::vector<std::uint8_t> bytes) {
    if (broken_) throw TransportError("loopback link is down");
    if (options_.fail_after_frames && sent_ >= *options_.fail_after_frames) {
      broken_ = true;
      throw TransportError("loopback link dropped");
    }
    ++sent_;
    queues_[static_cast<std::size_t>(from)].push_back({now_ + options_.latency_s, std::move(bytes)});
  }

  std::optional<Frame> pop(Side to) {
    auto& q = queues_[static_cast<std::size_t>(to == Side::alice ? Side::bob : Side::alice)];
    auto& reader = readers_[static_cast<std::size_t>(to)];
    while (!q.empty() && q.front().deliver_at <= now_) {
      reader.feed(q.front().bytes);
      q.pop_front();
    }
    if (auto f = reader.next()) return f;
    if (broken_ && q.empty()) throw TransportError("loopback link is down");
    return std::nullopt;
  }

 private:
  struct Pending {
    double deliver_at;
    std::vector<std::uint8_t> bytes;
  };

  LoopbackOptions options_;
  double now_ = 0.0;
  std::uint64_t sent_ = 0;
  bool broken_ = false;
  std::array<std::deque<Pending>, 2> queues_;
  std::array<FrameReader, 2> readers_;
};

class LoopbackEndpoint : public Endpoint {
 public:
  LoopbackEndpoint(std::shared_ptr<LoopbackLink> link, Side side) : link_(std::move(link)), self_(side) {}

  void send(const Frame& f) override {
    auto bytes = encode_frame(f);
    link_->push(self_, bytes);
    record(bytes);
  }
  std::optional<Frame> receive() override { return link_->pop(self_); }
  void close() override {}

  LoopbackLink& link() { return *link_; }

 private:
  std::shared_ptr<LoopbackLink> link_;
  Side self_;
};

struct LoopbackPair {
  std::shared_ptr<LoopbackLink> link;
  std::unique_ptr<LoopbackEndpoint> alice;
  std::unique_ptr<LoopbackEndpoint> bob;
};

inline LoopbackPair loopback_pair(LoopbackOptions options = {}) {
  LoopbackPair p;
  p.link = std::make_shared<LoopbackLink>(options);
  p.alice = std::make_unique<LoopbackEndpoint>(p.link, Side::alice);
  p.bob = std::make_unique<LoopbackEndpoint>(p.link, Side::bob);
  return p;
}

class SocketEndpoint : public Endpoint {
 public:
  explicit SocketEndpoint(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~SocketEndpoint() override { close(); }
  SocketEndpoint(const SocketEndpoint&) = delete;
  SocketEndpoint& operator=(const SocketEndpoint&) = delete;

  void send(const Frame& f) override {
    const auto bytes = encode_frame(f);
    // Recorded before the write so the peer's reply cannot be logged first.
    record(bytes);
    std::size_t done = 0;
    while (done < bytes.size()) {
      const ssize_t n = ::send(fd_, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("send: ") + std::strerror(errno));
      }
      done += static_cast<std::size_t>(n);
    }
  }

  std::optional<Frame> receive() override {
    std::array<std::uint8_t, 65536> buf;
    while (true) {
      if (auto f = reader_.next()) return f;
      if (fd_ < 0) throw TransportError("socket closed");
      const ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("recv: ") + std::strerror(errno));
      }
      if (n == 0) throw TransportError("connection closed by peer");
      reader_.feed({buf.data(), static_cast<std::size_t>(n)});
    }
  }

  void close() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_;
  FrameReader reader_;
};

/// Listening socket on 127.0.0.1 (port 0 picks a free port).
class SocketListener {
 public:
  explicit SocketListener(std::uint16_t port = 0) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(fd_, 1) < 0) {
      const std::string err = std::strerror(errno);
      ::close(fd_);
      throw TransportError("bind/listen: " + err);
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }
  ~SocketListener() {
    if (fd_ >= 0) ::close(fd_);
  }
  SocketListener(const SocketListener&) = delete;
  SocketListener& operator=(const SocketListener&) = delete;

  std::uint16_t port() const { return port_; }

  std::unique_ptr<SocketEndpoint> accept() {
    const int c = ::accept(fd_, nullptr, nullptr);
    if (c < 0) throw TransportError(std::string("accept: ") + std::strerror(errno));
    return std::make_unique<SocketEndpoint>(c);
  }

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

inline std::unique_ptr<SocketEndpoint> connect_localhost(std::uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw TransportError(std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    const std::string err = std::strerror(errno);
    ::close(fd);
    throw TransportError("connect: " + err);
  }
  return std::make_unique<SocketEndpoint>(fd);
}

struct SocketPair {
  std::unique_ptr<SocketEndpoint> alice;
  std::unique_ptr<SocketEndpoint> bob;
};

/// Two connected TCP endpoints over 127.0.0.1.
inline SocketPair socket_pair_localhost() {
  SocketListener listener;
  SocketPair p;
  p.bob = connect_localhost(listener.port());
  p.alice = listener.accept();
  return p;
}

}  // namespace qkdlink::service
