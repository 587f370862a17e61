#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "sss_prnu/error.hpp"
#include "sss_prnu/field.hpp"

namespace sss_prnu {

// Where the mean is removed before correlating: by the data owner on
// plaintext, or by the servers on shares.
enum class CenteringMode { kPlaintext, kEncrypted };

inline const char* to_string(CenteringMode mode) {
  return mode == CenteringMode::kPlaintext ? "plaintext" : "encrypted";
}

// Decimal fixed-point scaling: a real x is carried as round(x * 10^d).
class Scaling {
 public:
  static constexpr int kMaxDigits = 9;

  explicit Scaling(int digits = 4) : digits_(digits) {
    if (digits < 0 || digits > kMaxDigits) {
      throw InvalidParams("decimal digits must be in [0, " + std::to_string(kMaxDigits) + "]");
    }
    scale_ = 1;
    for (int i = 0; i < digits; ++i) scale_ *= 10;
  }

  int digits() const { return digits_; }
  std::int64_t scale() const { return scale_; }

  // 10^(d * power) as a double; exact for every power used here (<= 10^18).
  double scale_pow(int power) const {
    double s = 1.0;
    for (int i = 0; i < power; ++i) s *= static_cast<double>(scale_);
    return s;
  }

  bool operator==(const Scaling&) const = default;

 private:
  int digits_;
  std::int64_t scale_;
};

// round(x * 10^d) with ties away from zero, as a signed integer.
inline std::int64_t quantize(double x, const Scaling& s) {
  if (!std::isfinite(x)) throw OutOfRange("non-finite value");
  const double scaled = std::round(x * static_cast<double>(s.scale()));
  if (std::fabs(scaled) > 9.0e18) throw OutOfRange("value " + std::to_string(x) + " too large to quantize");
  return static_cast<std::int64_t>(scaled);
}

inline FieldElement encode(double x, const Scaling& s, const PrimeField& field) {
  const std::int64_t m = quantize(x, s);
  const std::uint64_t mag = m < 0 ? static_cast<std::uint64_t>(-(m + 1)) + 1 : static_cast<std::uint64_t>(m);
  if (mag > field.half()) {
    throw OutOfRange("encoded magnitude " + std::to_string(mag) + " exceeds (p-1)/2");
  }
  return field.from_signed(m);
}

// Signed lift divided by 10^(d * denom_power) and by an optional extra
// integer divisor (n_elems^2 for server-side centering).
inline double decode(FieldElement e, const Scaling& s, const PrimeField& field, int denom_power = 1,
                     double extra_divisor = 1.0) {
  return static_cast<double>(field.to_signed(e)) / (s.scale_pow(denom_power) * extra_divisor);
}

struct CapacityReport {
  std::uint64_t num_elements = 0;
  std::uint64_t max_encoded = 0;  // largest |encoded element| entering the sums
  u128 bound = 0;                 // worst-case magnitude of a sum of products
  std::uint64_t limit = 0;        // (p - 1) / 2
  bool ok = false;

  // limit - bound when ok, 0 otherwise.
  std::uint64_t margin() const { return ok ? limit - static_cast<std::uint64_t>(bound) : 0; }
};

// Worst-case bound on sum_k a_k * b_k for vectors of num_elements entries
// with |x| <= max_abs. In plaintext mode max_abs is the centered magnitude
// and the bound is N * m^2. In encrypted mode max_abs is the raw magnitude;
// servers compute N * m_k - sum(m), whose magnitude is at most 2 * N * m,
// so the bound becomes N * (2 N m)^2.
inline CapacityReport capacity_report(std::uint64_t num_elements, double max_abs, const Scaling& s,
                                      CenteringMode mode, const PrimeField& field) {
  CapacityReport report;
  report.num_elements = num_elements;
  report.limit = field.half();

  const long double limit = static_cast<long double>(report.limit);
  const long double m = std::floor(static_cast<long double>(std::fabs(max_abs)) * s.scale() + 0.5L);
  long double per_element = m;
  if (mode == CenteringMode::kEncrypted) per_element = 2.0L * static_cast<long double>(num_elements) * m;
  const long double estimate = static_cast<long double>(num_elements) * per_element * per_element;

  if (!(estimate < 4.0L * limit)) {
    report.max_encoded = m < limit ? static_cast<std::uint64_t>(m) : report.limit;
    report.bound = static_cast<u128>(report.limit) + 1;
    report.ok = false;
    return report;
  }
  // Exact integer evaluation once the estimate is known to fit in 128 bits.
  const u128 mi = static_cast<u128>(m);
  u128 pe = mi;
  if (mode == CenteringMode::kEncrypted) pe = 2 * static_cast<u128>(num_elements) * mi;
  report.max_encoded = static_cast<std::uint64_t>(pe);
  report.bound = static_cast<u128>(num_elements) * pe * pe;
  report.ok = report.bound < report.limit;
  return report;
}

inline CapacityReport capacity_check(std::uint64_t num_elements, double max_abs, const Scaling& s,
                                     CenteringMode mode, const PrimeField& field) {
  CapacityReport report = capacity_report(num_elements, max_abs, s, mode, field);
  if (!report.ok) {
    throw CapacityExceeded("bound " + std::to_string(static_cast<long double>(report.bound)) + " for " +
                           std::to_string(num_elements) + " elements (max |x| = " + std::to_string(max_abs) +
                           ", d = " + std::to_string(s.digits()) + ", " + to_string(mode) +
                           " centering) is not below (p-1)/2 = " + std::to_string(report.limit));
  }
  return report;
}

}  // namespace sss_prnu
