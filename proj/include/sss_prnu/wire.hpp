#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>

#include "sss_prnu/bytes.hpp"
#include "sss_prnu/error.hpp"
#include "sss_prnu/secret_sharing.hpp"
#include "sss_prnu/secure_correlation.hpp"

namespace sss_prnu::wire {

// Frame: length (4, excludes itself) | type (1) | payload. Big-endian.
enum class MessageType : std::uint8_t {
  kEnroll = 0x01,
  kEnrollAck = 0x02,
  kQuery = 0x03,
  kPartial = 0x04,
  kFetch = 0x05,
  kShare = 0x06,
  kUnenroll = 0x07,
  kError = 0x7F,
};

inline constexpr std::uint32_t kMaxFrameLength = 1u << 28;
inline constexpr std::size_t kMaxIdLength = 255;

struct Frame {
  MessageType type = MessageType::kError;
  Bytes payload;

  bool operator==(const Frame&) const = default;
};

inline Bytes encode_frame(const Frame& f) {
  if (f.payload.size() + 1 > kMaxFrameLength) throw InvalidParams("frame too large");
  Bytes out;
  out.reserve(f.payload.size() + 5);
  ByteWriter w(out);
  w.u32(static_cast<std::uint32_t>(f.payload.size() + 1));
  w.u8(static_cast<std::uint8_t>(f.type));
  w.raw(f.payload);
  return out;
}

inline bool known_type(std::uint8_t t) {
  return (t >= 0x01 && t <= 0x07) || t == 0x7F;
}

// Decodes exactly one frame occupying all of data.
inline Frame decode_frame(std::span<const std::uint8_t> data) {
  ByteReader r(data);
  const std::uint32_t len = r.u32();
  if (len == 0 || len > kMaxFrameLength) throw Malformed("bad frame length " + std::to_string(len));
  if (r.remaining() != len) throw Malformed("frame length does not match data");
  const std::uint8_t type = r.u8();
  if (!known_type(type)) throw Malformed("unknown message type " + std::to_string(type));
  auto body = r.raw(len - 1);
  return Frame{static_cast<MessageType>(type), Bytes(body.begin(), body.end())};
}

// ---- message bodies -------------------------------------------------------

struct Enroll {
  std::string id;
  ShareVector share;
};
struct EnrollAck {
  bool already_present = false;
};
struct Query {
  std::string id;
  ShareVector share;
};
struct Partial {
  PartialCorrelation partial;
};
struct Fetch {
  std::string id;
};
struct ShareMsg {
  ShareVector share;
};
struct Unenroll {
  std::string id;
};
struct ErrorMsg {
  std::uint16_t code = 0;
  std::string message;
};

inline void validate_id(const std::string& id) {
  if (id.empty() || id.size() > kMaxIdLength) throw InvalidParams("fingerprint id must be 1..255 bytes");
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    if (!ok) throw InvalidParams("fingerprint id may only contain [A-Za-z0-9._-]");
  }
  if (id == "." || id == "..") throw InvalidParams("fingerprint id may not be '.' or '..'");
}

namespace detail {

inline void write_id(ByteWriter& w, const std::string& id) {
  w.u16(static_cast<std::uint16_t>(id.size()));
  w.raw(std::string_view(id));
}

inline std::string read_id(ByteReader& r) {
  const std::uint16_t n = r.u16();
  std::string id = r.str(n);
  try {
    validate_id(id);
  } catch (const Error& e) {
    throw Malformed(e.what());
  }
  return id;
}

template <typename Fn>
Frame build(MessageType type, Fn&& body) {
  Frame f{type, {}};
  ByteWriter w(f.payload);
  body(w);
  return f;
}

inline void expect(const Frame& f, MessageType t) {
  if (f.type != t) {
    throw Malformed("expected message type " + std::to_string(static_cast<int>(t)) + ", got " +
                    std::to_string(static_cast<int>(f.type)));
  }
}

}  // namespace detail

inline Frame make(const Enroll& m) {
  validate_id(m.id);
  return detail::build(MessageType::kEnroll, [&](ByteWriter& w) {
    detail::write_id(w, m.id);
    write_share_vector(w, m.share);
  });
}
inline Frame make(const EnrollAck& m) {
  return detail::build(MessageType::kEnrollAck, [&](ByteWriter& w) { w.u8(m.already_present ? 1 : 0); });
}
inline Frame make(const Query& m) {
  validate_id(m.id);
  return detail::build(MessageType::kQuery, [&](ByteWriter& w) {
    detail::write_id(w, m.id);
    write_share_vector(w, m.share);
  });
}
inline Frame make(const Partial& m) {
  return detail::build(MessageType::kPartial, [&](ByteWriter& w) { write_partial(w, m.partial); });
}
inline Frame make(const Fetch& m) {
  validate_id(m.id);
  return detail::build(MessageType::kFetch, [&](ByteWriter& w) { detail::write_id(w, m.id); });
}
inline Frame make(const ShareMsg& m) {
  return detail::build(MessageType::kShare, [&](ByteWriter& w) { write_share_vector(w, m.share); });
}
inline Frame make(const Unenroll& m) {
  validate_id(m.id);
  return detail::build(MessageType::kUnenroll, [&](ByteWriter& w) { detail::write_id(w, m.id); });
}
inline Frame make(const ErrorMsg& m) {
  return detail::build(MessageType::kError, [&](ByteWriter& w) {
    w.u16(m.code);
    w.raw(std::string_view(m.message));
  });
}

inline Frame make_error(ErrorCode code, const std::string& message) {
  return make(ErrorMsg{static_cast<std::uint16_t>(code), message});
}

inline Enroll parse_enroll(const Frame& f, const PrimeField& field) {
  detail::expect(f, MessageType::kEnroll);
  ByteReader r(f.payload);
  Enroll m;
  m.id = detail::read_id(r);
  m.share = read_share_vector(r, field);
  r.expect_done("ENROLL");
  return m;
}

inline EnrollAck parse_enroll_ack(const Frame& f) {
  detail::expect(f, MessageType::kEnrollAck);
  ByteReader r(f.payload);
  EnrollAck m;
  m.already_present = r.u8() != 0;
  r.expect_done("ENROLL_ACK");
  return m;
}

inline Query parse_query(const Frame& f, const PrimeField& field) {
  detail::expect(f, MessageType::kQuery);
  ByteReader r(f.payload);
  Query m;
  m.id = detail::read_id(r);
  m.share = read_share_vector(r, field);
  r.expect_done("QUERY");
  return m;
}

inline Partial parse_partial(const Frame& f, const ShareScheme& scheme) {
  detail::expect(f, MessageType::kPartial);
  ByteReader r(f.payload);
  Partial m{read_partial(r, scheme)};
  r.expect_done("PARTIAL");
  return m;
}

inline Fetch parse_fetch(const Frame& f) {
  detail::expect(f, MessageType::kFetch);
  ByteReader r(f.payload);
  Fetch m{detail::read_id(r)};
  r.expect_done("FETCH");
  return m;
}

inline ShareMsg parse_share(const Frame& f, const PrimeField& field) {
  detail::expect(f, MessageType::kShare);
  ByteReader r(f.payload);
  ShareMsg m{read_share_vector(r, field)};
  r.expect_done("SHARE");
  return m;
}

inline Unenroll parse_unenroll(const Frame& f) {
  detail::expect(f, MessageType::kUnenroll);
  ByteReader r(f.payload);
  Unenroll m{detail::read_id(r)};
  r.expect_done("UNENROLL");
  return m;
}

inline ErrorMsg parse_error(const Frame& f) {
  detail::expect(f, MessageType::kError);
  ByteReader r(f.payload);
  ErrorMsg m;
  m.code = r.u16();
  m.message = r.str(r.remaining());
  return m;
}

// Rethrows an ERROR frame as the matching library exception.
[[noreturn]] inline void raise(const ErrorMsg& e) {
  const auto code = static_cast<ErrorCode>(e.code);
  switch (code) {
    case ErrorCode::kUnknownFingerprint: throw UnknownFingerprint(e.message);
    case ErrorCode::kIdConflict: throw IdConflict(e.message);
    case ErrorCode::kMalformed: throw Malformed(e.message);
    default: throw Error(code, "remote: " + e.message);
  }
}

}  // namespace sss_prnu::wire
