#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <ostream>
#include <string>

#include "sss_prnu/bytes.hpp"
#include "sss_prnu/error.hpp"

namespace sss_prnu {

using u128 = unsigned __int128;
using i128 = __int128;

inline constexpr std::uint64_t kMersenne61 = (std::uint64_t{1} << 61) - 1;

// Canonical residue in [0, p). Carries no modulus; arithmetic goes through
// the PrimeField that produced it.
struct FieldElement {
  std::uint64_t value = 0;

  constexpr FieldElement() = default;
  constexpr explicit FieldElement(std::uint64_t v) : value(v) {}

  constexpr auto operator<=>(const FieldElement&) const = default;
};

inline std::ostream& operator<<(std::ostream& os, FieldElement e) { return os << e.value; }

namespace detail {

constexpr std::uint64_t mulmod(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
  return static_cast<std::uint64_t>(static_cast<u128>(a) * b % m);
}

constexpr std::uint64_t powmod(std::uint64_t base, std::uint64_t exp, std::uint64_t m) {
  std::uint64_t result = 1 % m;
  base %= m;
  while (exp != 0) {
    if (exp & 1) result = mulmod(result, base, m);
    base = mulmod(base, base, m);
    exp >>= 1;
  }
  return result;
}

}  // namespace detail

// Deterministic Miller-Rabin. The first twelve primes as witnesses are
// sufficient for every n < 3.3 * 10^24, which covers all of uint64_t.
constexpr bool is_prime_u64(std::uint64_t n) {
  if (n < 2) return false;
  constexpr std::array<std::uint64_t, 12> kWitnesses = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  for (std::uint64_t w : kWitnesses) {
    if (n % w == 0) return n == w;
  }
  std::uint64_t d = n - 1;
  int s = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++s;
  }
  for (std::uint64_t a : kWitnesses) {
    std::uint64_t x = detail::powmod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int r = 1; r < s; ++r) {
      x = detail::mulmod(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

// Arithmetic in Z_p for a prime p < 2^63, fixed at construction.
class PrimeField {
 public:
  explicit PrimeField(std::uint64_t p = kMersenne61) : p_(p) {
    if (p >= (std::uint64_t{1} << 63)) throw InvalidParams("modulus must be below 2^63");
    if (!is_prime_u64(p)) throw InvalidParams("modulus " + std::to_string(p) + " is not prime");
  }

  std::uint64_t modulus() const { return p_; }

  // (p - 1) / 2: largest magnitude of a signed integer that survives a
  // round trip through the field.
  std::uint64_t half() const { return (p_ - 1) / 2; }

  FieldElement zero() const { return FieldElement{0}; }
  FieldElement one() const { return FieldElement{1}; }

  FieldElement from_u64(std::uint64_t v) const { return FieldElement{v % p_}; }

  FieldElement from_signed(std::int64_t v) const {
    if (v >= 0) return from_u64(static_cast<std::uint64_t>(v));
    std::uint64_t mag = static_cast<std::uint64_t>(-(v + 1)) + 1;
    return neg(from_u64(mag));
  }

  FieldElement from_i128(i128 v) const {
    i128 r = v % static_cast<i128>(p_);
    if (r < 0) r += p_;
    return FieldElement{static_cast<std::uint64_t>(r)};
  }

  // Signed lift into (-(p-1)/2, (p-1)/2].
  std::int64_t to_signed(FieldElement e) const {
    if (e.value <= half()) return static_cast<std::int64_t>(e.value);
    return -static_cast<std::int64_t>(p_ - e.value);
  }

  bool contains(FieldElement e) const { return e.value < p_; }

  FieldElement add(FieldElement a, FieldElement b) const {
    std::uint64_t s = a.value + b.value;  // both < 2^63, no overflow
    return FieldElement{s >= p_ ? s - p_ : s};
  }

  FieldElement sub(FieldElement a, FieldElement b) const {
    return FieldElement{a.value >= b.value ? a.value - b.value : a.value + (p_ - b.value)};
  }

  FieldElement neg(FieldElement a) const { return FieldElement{a.value == 0 ? 0 : p_ - a.value}; }

  FieldElement mul(FieldElement a, FieldElement b) const {
    if (p_ == kMersenne61) {
      u128 prod = static_cast<u128>(a.value) * b.value;
      std::uint64_t lo = static_cast<std::uint64_t>(prod) & kMersenne61;
      std::uint64_t hi = static_cast<std::uint64_t>(prod >> 61);
      std::uint64_t s = lo + hi;
      return FieldElement{s >= kMersenne61 ? s - kMersenne61 : s};
    }
    return FieldElement{detail::mulmod(a.value, b.value, p_)};
  }

  FieldElement pow(FieldElement base, std::uint64_t exp) const {
    FieldElement result = one();
    while (exp != 0) {
      if (exp & 1) result = mul(result, base);
      base = mul(base, base);
      exp >>= 1;
    }
    return result;
  }

  // Fermat inverse a^(p-2).
  FieldElement inv(FieldElement a) const {
    if (a.value == 0) throw ZeroInverse("inverse of zero");
    return pow(a, p_ - 2);
  }

  bool operator==(const PrimeField& other) const { return p_ == other.p_; }

 private:
  std::uint64_t p_;
};

inline void write_element(ByteWriter& w, FieldElement e) { w.u64(e.value); }

inline FieldElement read_element(ByteReader& r, const PrimeField& field) {
  FieldElement e{r.u64()};
  if (!field.contains(e)) throw Malformed("field element " + std::to_string(e.value) + " out of range");
  return e;
}

}  // namespace sss_prnu
