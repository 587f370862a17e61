#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "sss_prnu/server.hpp"
#include "sss_prnu/wire.hpp"

namespace sss_prnu {

// Request/response link to one cloud server. Implementations throw
// TransportError when the server cannot be reached in time.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual Bytes call(std::span<const std::uint8_t> request) = 0;

  wire::Frame call(const wire::Frame& request) {
    const Bytes reply = call(std::span<const std::uint8_t>(wire::encode_frame(request)));
    return wire::decode_frame(reply);
  }
};

// Direct binding to a server object in the same process. Can be switched
// off to simulate an outage.
class InProcessChannel : public Channel {
 public:
  explicit InProcessChannel(std::shared_ptr<CloudServer> server) : server_(std::move(server)) {}

  using Channel::call;
  Bytes call(std::span<const std::uint8_t> request) override {
    if (!up_.load()) throw TransportError("server " + std::to_string(server_->point().value) + " unreachable");
    return server_->handle_bytes(request);
  }

  void set_up(bool up) { up_.store(up); }
  bool up() const { return up_.load(); }
  CloudServer& server() { return *server_; }

 private:
  std::shared_ptr<CloudServer> server_;
  std::atomic<bool> up_{true};
};

// Ordered record of the bytes exchanged on one channel.
class Trace {
 public:
  struct Entry {
    bool outbound;  // client -> server
    Bytes bytes;
  };

  void record(bool outbound, std::span<const std::uint8_t> bytes) {
    std::lock_guard lock(mu_);
    entries_.push_back(Entry{outbound, Bytes(bytes.begin(), bytes.end())});
  }

  std::vector<Entry> entries() const {
    std::lock_guard lock(mu_);
    return entries_;
  }

  // Direction byte ('>' or '<') followed by each message, for comparisons.
  Bytes flatten() const {
    std::lock_guard lock(mu_);
    Bytes out;
    for (const Entry& e : entries_) {
      out.push_back(e.outbound ? '>' : '<');
      out.insert(out.end(), e.bytes.begin(), e.bytes.end());
    }
    return out;
  }

 private:
  mutable std::mutex mu_;
  std::vector<Entry> entries_;
};

class TracingChannel : public Channel {
 public:
  TracingChannel(std::shared_ptr<Channel> inner, std::shared_ptr<Trace> trace)
      : inner_(std::move(inner)), trace_(std::move(trace)) {}

  using Channel::call;
  Bytes call(std::span<const std::uint8_t> request) override {
    trace_->record(true, request);
    Bytes reply = inner_->call(request);
    trace_->record(false, reply);
    return reply;
  }

  const std::shared_ptr<Trace>& trace() const { return trace_; }

 private:
  std::shared_ptr<Channel> inner_;
  std::shared_ptr<Trace> trace_;
};

// Checks the confidentiality boundary on one server's traffic: every frame
// parses as a protocol message, every share in it belongs to that server's
// point, and nothing but field elements and ids crosses the link.
inline std::vector<std::string> inspect_server_traffic(const Trace& trace, FieldElement point,
                                                       const ShareScheme& scheme) {
  std::vector<std::string> problems;
  const PrimeField& f = scheme.field();
  auto check_point = [&](FieldElement p, const char* what) {
    if (p != point) {
      problems.push_back(std::string(what) + " carries point " + std::to_string(p.value) + " on link to " +
                         std::to_string(point.value));
    }
  };
  for (const Trace::Entry& e : trace.entries()) {
    try {
      const wire::Frame frame = wire::decode_frame(e.bytes);
      switch (frame.type) {
        case wire::MessageType::kEnroll: check_point(wire::parse_enroll(frame, f).share.point, "ENROLL"); break;
        case wire::MessageType::kQuery: check_point(wire::parse_query(frame, f).share.point, "QUERY"); break;
        case wire::MessageType::kShare: check_point(wire::parse_share(frame, f).share.point, "SHARE"); break;
        case wire::MessageType::kPartial:
          check_point(wire::parse_partial(frame, scheme).partial.point, "PARTIAL");
          break;
        case wire::MessageType::kEnrollAck: wire::parse_enroll_ack(frame); break;
        case wire::MessageType::kFetch: wire::parse_fetch(frame); break;
        case wire::MessageType::kUnenroll: wire::parse_unenroll(frame); break;
        case wire::MessageType::kError: wire::parse_error(frame); break;
      }
    } catch (const Error& err) {
      problems.push_back(std::string("unparseable frame: ") + err.what());
    }
  }
  return problems;
}

}  // namespace sss_prnu
