#pragma once

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "sss_prnu/server.hpp"
#include "sss_prnu/transport.hpp"
#include "sss_prnu/wire.hpp"

namespace sss_prnu {

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }

  static Endpoint parse(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
      throw InvalidParams("endpoint '" + text + "' is not host:port");
    }
    const std::string port = text.substr(colon + 1);
    for (char c : port) {
      if (c < '0' || c > '9') throw InvalidParams("endpoint '" + text + "' has a non-numeric port");
    }
    const unsigned long value = port.size() > 5 ? 70000 : std::stoul(port);
    if (value > 65535) throw InvalidParams("endpoint '" + text + "' port out of range");
    return Endpoint{text.substr(0, colon), static_cast<std::uint16_t>(value)};
  }
};

namespace detail {

using Clock = std::chrono::steady_clock;

// Owning socket descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { reset(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left < 0 ? 0 : static_cast<int>(left);
}

// Waits for the given poll events; false on timeout.
inline bool wait_for(int fd, short events, Clock::time_point deadline) {
  for (;;) {
    pollfd p{fd, events, 0};
    const int rc = ::poll(&p, 1, remaining_ms(deadline));
    if (rc > 0) return true;
    if (rc == 0) return false;
    if (errno != EINTR) throw TransportError(std::string("poll: ") + std::strerror(errno));
  }
}

inline void send_all(int fd, std::span<const std::uint8_t> data, Clock::time_point deadline) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    if (!wait_for(fd, POLLOUT, deadline)) throw TransportError("send timed out");
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN || errno == EWOULDBLOCK) continue;
      throw TransportError(std::string("send: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

// Reads exactly out.size() bytes. Returns false on clean EOF before the
// first byte.
inline bool recv_exact(int fd, std::span<std::uint8_t> out, Clock::time_point deadline) {
  std::size_t got = 0;
  while (got < out.size()) {
    if (!wait_for(fd, POLLIN, deadline)) throw TransportError("receive timed out");
    const ssize_t n = ::recv(fd, out.data() + got, out.size() - got, 0);
    if (n == 0) {
      if (got == 0) return false;
      throw TransportError("connection closed mid-frame");
    }
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN || errno == EWOULDBLOCK) continue;
      throw TransportError(std::string("recv: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(n);
  }
  return true;
}

inline void set_nonblocking(int fd) {
  const int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

struct AddrInfoDeleter {
  void operator()(addrinfo* p) const { ::freeaddrinfo(p); }
};

inline std::unique_ptr<addrinfo, AddrInfoDeleter> resolve(const Endpoint& ep, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(ep.port);
  const int rc = ::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res);
  if (rc != 0) throw TransportError("cannot resolve " + ep.str() + ": " + ::gai_strerror(rc));
  return std::unique_ptr<addrinfo, AddrInfoDeleter>(res);
}

inline Socket connect_to(const Endpoint& ep, Clock::time_point deadline) {
  auto addrs = resolve(ep, false);
  std::string last_error = "no addresses";
  for (addrinfo* ai = addrs.get(); ai != nullptr; ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!s.valid()) continue;
    set_nonblocking(s.fd());
    int one = 1;
    ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    if (::connect(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0) return s;
    if (errno != EINPROGRESS) {
      last_error = std::strerror(errno);
      continue;
    }
    if (!wait_for(s.fd(), POLLOUT, deadline)) {
      last_error = "connect timed out";
      continue;
    }
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err == 0) return s;
    last_error = std::strerror(err);
  }
  throw TransportError("cannot connect to " + ep.str() + ": " + last_error);
}

// Reads one length-prefixed frame, returned with its 4-byte prefix.
// Returns an empty buffer on clean EOF.
inline Bytes read_frame_bytes(int fd, Clock::time_point deadline) {
  Bytes frame(4);
  if (!recv_exact(fd, frame, deadline)) return {};
  const std::uint32_t len = (std::uint32_t{frame[0]} << 24) | (std::uint32_t{frame[1]} << 16) |
                            (std::uint32_t{frame[2]} << 8) | std::uint32_t{frame[3]};
  if (len == 0 || len > wire::kMaxFrameLength) throw Malformed("bad frame length " + std::to_string(len));
  frame.resize(4 + static_cast<std::size_t>(len));
  if (!recv_exact(fd, std::span<std::uint8_t>(frame).subspan(4), deadline)) {
    throw TransportError("connection closed mid-frame");
  }
  return frame;
}

}  // namespace detail

// Client side of the wire protocol. Keeps one connection open and
// reconnects after any failure.
class TcpChannel : public Channel {
 public:
  TcpChannel(Endpoint endpoint, std::chrono::milliseconds timeout) : endpoint_(std::move(endpoint)), timeout_(timeout) {}

  using Channel::call;
  Bytes call(std::span<const std::uint8_t> request) override {
    std::lock_guard lock(mu_);
    const auto deadline = detail::Clock::now() + timeout_;
    try {
      if (!socket_.valid()) socket_ = detail::connect_to(endpoint_, deadline);
      detail::send_all(socket_.fd(), request, deadline);
      Bytes reply = detail::read_frame_bytes(socket_.fd(), deadline);
      if (reply.empty()) throw TransportError("server closed the connection");
      return reply;
    } catch (const Error& e) {
      socket_.reset();
      if (e.code() == ErrorCode::kTransport) throw;
      throw TransportError(endpoint_.str() + ": " + e.what());
    }
  }

  const Endpoint& endpoint() const { return endpoint_; }

 private:
  Endpoint endpoint_;
  std::chrono::milliseconds timeout_;
  std::mutex mu_;
  detail::Socket socket_;
};

// Accept loop serving one CloudServer; one thread per connection, requests
// on a connection handled in order.
class TcpServer {
 public:
  TcpServer(std::shared_ptr<CloudServer> server, const Endpoint& listen_at) : server_(std::move(server)) {
    auto addrs = detail::resolve(listen_at, true);
    std::string last_error = "no addresses";
    for (addrinfo* ai = addrs.get(); ai != nullptr; ai = ai->ai_next) {
      detail::Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
      if (!s.valid()) continue;
      int one = 1;
      ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
      if (::bind(s.fd(), ai->ai_addr, ai->ai_addrlen) != 0 || ::listen(s.fd(), 64) != 0) {
        last_error = std::strerror(errno);
        continue;
      }
      listener_ = std::move(s);
      break;
    }
    if (!listener_.valid()) throw TransportError("cannot listen on " + listen_at.str() + ": " + last_error);
    sockaddr_storage addr{};
    socklen_t len = sizeof addr;
    ::getsockname(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    const std::uint16_t port = addr.ss_family == AF_INET6
                                   ? ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port)
                                   : ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
    bound_ = Endpoint{listen_at.host, port};
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;
  ~TcpServer() { stop(); }

  // Actual address, with the kernel-chosen port when 0 was requested.
  const Endpoint& endpoint() const { return bound_; }

  void stop() {
    if (stopping_.exchange(true)) return;
    if (accept_thread_.joinable()) accept_thread_.join();
    {
      std::lock_guard lock(mu_);
      for (auto& c : connections_) {
        if (c.fd >= 0) ::shutdown(c.fd, SHUT_RDWR);
      }
    }
    // No new connections can appear once the accept thread is gone.
    for (auto& c : connections_) {
      if (c.thread.joinable()) c.thread.join();
    }
    connections_.clear();
    listener_.reset();
  }

 private:
  struct Connection {
    int fd = -1;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  static constexpr auto kPollSlice = std::chrono::milliseconds(50);

  void accept_loop() {
    while (!stopping_.load()) {
      if (!detail::wait_for(listener_.fd(), POLLIN, detail::Clock::now() + kPollSlice)) continue;
      const int fd = ::accept(listener_.fd(), nullptr, nullptr);
      if (fd < 0) continue;
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      reap();
      std::lock_guard lock(mu_);
      Connection& c = connections_.emplace_back();
      c.fd = fd;
      c.thread = std::thread([this, &c] { serve(c); });
    }
  }

  void serve(Connection& conn) {
    const int fd = conn.fd;
    try {
      while (!stopping_.load()) {
        if (!detail::wait_for(fd, POLLIN, detail::Clock::now() + kPollSlice)) continue;
        Bytes request;
        bool resync_possible = true;
        try {
          request = detail::read_frame_bytes(fd, detail::Clock::now() + std::chrono::seconds(30));
          if (request.empty()) break;
        } catch (const Malformed& e) {
          // A bad length prefix leaves no frame boundary to recover from.
          resync_possible = false;
          const Bytes reply = wire::encode_frame(wire::make_error(ErrorCode::kMalformed, e.what()));
          detail::send_all(fd, reply, detail::Clock::now() + std::chrono::seconds(5));
        }
        if (!resync_possible) break;
        const Bytes reply = server_->handle_bytes(request);
        detail::send_all(fd, reply, detail::Clock::now() + std::chrono::seconds(30));
      }
    } catch (const Error&) {
      // Peer went away or timed out; drop the connection.
    }
    close_connection(conn);
    conn.done.store(true);
  }

  // Joins connection threads that have finished. Accept thread only.
  void reap() {
    std::list<Connection> finished;
    {
      std::lock_guard lock(mu_);
      for (auto it = connections_.begin(); it != connections_.end();) {
        auto next = std::next(it);
        if (it->done.load()) finished.splice(finished.end(), connections_, it);
        it = next;
      }
    }
    for (auto& c : finished) c.thread.join();
  }

  void close_connection(Connection& conn) {
    std::lock_guard lock(mu_);
    if (conn.fd >= 0) ::close(conn.fd);
    conn.fd = -1;
  }

  std::shared_ptr<CloudServer> server_;
  detail::Socket listener_;
  Endpoint bound_;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex mu_;
  std::list<Connection> connections_;
};

}  // namespace sss_prnu
