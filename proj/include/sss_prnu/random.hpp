#pragma once

#include <sodium.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numbers>
#include <optional>

#include "sss_prnu/error.hpp"
#include "sss_prnu/field.hpp"

namespace sss_prnu {

namespace detail {

inline void ensure_sodium() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw InvalidParams("libsodium initialisation failed");
}

}  // namespace detail

// Random source for share polynomials and synthetic data.
//
// Rng::system() draws from the OS CSPRNG. Rng::seeded() expands a 64-bit
// seed (and an optional stream id) into a ChaCha20 keystream, so every run
// with the same seed sees the same bytes. One Rng per caller; not
// thread-safe.
class Rng {
 public:
  using result_type = std::uint64_t;

  static Rng system() { return Rng(std::nullopt, 0); }
  static Rng seeded(std::uint64_t seed, std::uint64_t stream = 0) { return Rng(seed, stream); }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next_u64(); }

  bool deterministic() const { return deterministic_; }

  std::uint64_t next_u64() {
    if (pos_ + 8 > buffer_.size()) refill();
    std::uint64_t v;
    std::memcpy(&v, buffer_.data() + pos_, 8);
    pos_ += 8;
    return v;
  }

  // Uniform on [0, bound) by rejection on the smallest covering power of two.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw InvalidParams("empty range");
    if (bound == 1) return 0;
    const int bits = 64 - std::countl_zero(bound - 1);
    const std::uint64_t mask = bits == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bits) - 1;
    for (;;) {
      std::uint64_t v = next_u64() & mask;
      if (v < bound) return v;
    }
  }

  FieldElement uniform(const PrimeField& field) { return FieldElement{below(field.modulus())}; }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double normal() {
    if (spare_) {
      double v = *spare_;
      spare_.reset();
      return v;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    return radius * std::cos(angle);
  }

 private:
  Rng(std::optional<std::uint64_t> seed, std::uint64_t stream) : deterministic_(seed.has_value()) {
    detail::ensure_sodium();
    key_.fill(0);
    if (seed) {
      for (int i = 0; i < 8; ++i) {
        key_[i] = static_cast<unsigned char>(*seed >> (8 * i));
        key_[8 + i] = static_cast<unsigned char>(stream >> (8 * i));
      }
    }
    pos_ = buffer_.size();
  }

  void refill() {
    if (!deterministic_) {
      randombytes_buf(buffer_.data(), buffer_.size());
    } else {
      std::array<unsigned char, crypto_stream_chacha20_ietf_NONCEBYTES> nonce{};
      for (int i = 0; i < 8; ++i) nonce[i] = static_cast<unsigned char>(block_ >> (8 * i));
      crypto_stream_chacha20_ietf(buffer_.data(), buffer_.size(), nonce.data(), key_.data());
      ++block_;
    }
    pos_ = 0;
  }

  bool deterministic_;
  std::array<unsigned char, crypto_stream_chacha20_ietf_KEYBYTES> key_{};
  std::array<unsigned char, 4096> buffer_{};
  std::size_t pos_ = 0;
  std::uint64_t block_ = 0;
  std::optional<double> spare_;
};

}  // namespace sss_prnu
