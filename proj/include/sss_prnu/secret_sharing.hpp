#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sss_prnu/bytes.hpp"
#include "sss_prnu/error.hpp"
#include "sss_prnu/field.hpp"
#include "sss_prnu/random.hpp"

namespace sss_prnu {

// (l, n) Shamir parameters. l is the threshold for fresh shares; after one
// share-wise multiplication the threshold becomes 2l - 1, so n >= 2l - 1.
class ShareScheme {
 public:
  ShareScheme(PrimeField field, int l, int n) : ShareScheme(field, l, n, default_points(field, n)) {}

  ShareScheme(PrimeField field, int l, int n, std::vector<FieldElement> points)
      : field_(field), l_(l), n_(n), points_(std::move(points)) {
    if (l < 2) throw InvalidParams("threshold l must be at least 2");
    if (n < 2 * l - 1) throw InvalidParams("n must be at least 2l - 1 to open one product");
    if (n > 255) throw InvalidParams("at most 255 shares");
    if (static_cast<int>(points_.size()) != n) throw InvalidParams("need exactly n evaluation points");
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (!field_.contains(points_[i]) || points_[i].value == 0) {
        throw InvalidParams("evaluation points must be nonzero field elements");
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (points_[i] == points_[j]) throw DuplicatePoint("evaluation point " + std::to_string(points_[i].value));
      }
    }
  }

  const PrimeField& field() const { return field_; }
  int l() const { return l_; }
  int n() const { return n_; }
  const std::vector<FieldElement>& points() const { return points_; }

  int fresh_degree() const { return l_ - 1; }
  int product_degree() const { return 2 * l_ - 2; }
  int quorum() const { return 2 * l_ - 1; }

  // Index of an evaluation point, or -1.
  int index_of(FieldElement point) const {
    auto it = std::find(points_.begin(), points_.end(), point);
    return it == points_.end() ? -1 : static_cast<int>(it - points_.begin());
  }

 private:
  static std::vector<FieldElement> default_points(const PrimeField& field, int n) {
    std::vector<FieldElement> pts;
    for (int i = 1; i <= n; ++i) pts.push_back(field.from_u64(static_cast<std::uint64_t>(i)));
    return pts;
  }

  PrimeField field_;
  int l_;
  int n_;
  std::vector<FieldElement> points_;
};

struct Share {
  FieldElement point;
  FieldElement value;
  int degree_hint = 0;

  bool operator==(const Share&) const = default;
};

// One server's share of a whole vector: a single evaluation point and one
// value per element.
struct ShareVector {
  FieldElement point;
  std::vector<FieldElement> values;
  int degree_hint = 0;

  std::size_t size() const { return values.size(); }
  bool operator==(const ShareVector&) const = default;
};

// G(u) = secret + sum_i coeffs[i-1] * u^i, evaluated at every scheme point.
// Exposed so tests can pin the polynomial.
inline std::vector<Share> share_with_coefficients(FieldElement secret, std::span<const FieldElement> coeffs,
                                                  const ShareScheme& scheme) {
  const PrimeField& f = scheme.field();
  if (!f.contains(secret)) throw OutOfRange("secret not reduced mod p");
  std::vector<Share> shares;
  shares.reserve(scheme.points().size());
  for (FieldElement u : scheme.points()) {
    // Horner from the top coefficient down.
    FieldElement acc = f.zero();
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = f.add(f.mul(acc, u), *it);
    acc = f.add(f.mul(acc, u), secret);
    shares.push_back(Share{u, acc, static_cast<int>(coeffs.size())});
  }
  return shares;
}

inline std::vector<Share> share(FieldElement secret, const ShareScheme& scheme, Rng& rng) {
  std::vector<FieldElement> coeffs(static_cast<std::size_t>(scheme.fresh_degree()));
  for (auto& c : coeffs) c = rng.uniform(scheme.field());
  return share_with_coefficients(secret, coeffs, scheme);
}

// Shares every element independently; result[i] belongs to scheme point i.
inline std::vector<ShareVector> share_vector(std::span<const FieldElement> secrets, const ShareScheme& scheme,
                                             Rng& rng) {
  const PrimeField& f = scheme.field();
  const auto& pts = scheme.points();
  std::vector<ShareVector> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out[i].point = pts[i];
    out[i].degree_hint = scheme.fresh_degree();
    out[i].values.resize(secrets.size());
  }
  std::vector<FieldElement> coeffs(static_cast<std::size_t>(scheme.fresh_degree()));
  for (std::size_t k = 0; k < secrets.size(); ++k) {
    if (!f.contains(secrets[k])) throw OutOfRange("secret not reduced mod p");
    for (auto& c : coeffs) c = rng.uniform(f);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      FieldElement acc = f.zero();
      for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = f.add(f.mul(acc, pts[i]), *it);
      out[i].values[k] = f.add(f.mul(acc, pts[i]), secrets[k]);
    }
  }
  return out;
}

// Lagrange basis weights s_i(0) = prod_{j != i} u_j / (u_j - u_i).
inline std::vector<FieldElement> lagrange_weights_at_zero(std::span<const FieldElement> points,
                                                          const PrimeField& f) {
  std::vector<FieldElement> weights(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    FieldElement num = f.one();
    FieldElement den = f.one();
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (j == i) continue;
      if (points[j] == points[i]) throw DuplicatePoint("evaluation point " + std::to_string(points[i].value));
      num = f.mul(num, points[j]);
      den = f.mul(den, f.sub(points[j], points[i]));
    }
    weights[i] = f.mul(num, f.inv(den));
  }
  return weights;
}

namespace detail {

inline void check_reconstructible(std::size_t k, int degree_hint) {
  if (k < static_cast<std::size_t>(degree_hint) + 1) {
    throw InsufficientShares("have " + std::to_string(k) + " shares, need " + std::to_string(degree_hint + 1));
  }
}

}  // namespace detail

// F(0) through every given share.
inline FieldElement reconstruct(std::span<const Share> shares, const PrimeField& f) {
  if (shares.empty()) throw InsufficientShares("have 0 shares");
  const int degree = shares.front().degree_hint;
  std::vector<FieldElement> points;
  for (const Share& s : shares) {
    if (s.degree_hint != degree) throw DegreeMismatch("shares carry different degrees");
    points.push_back(s.point);
  }
  detail::check_reconstructible(shares.size(), degree);
  const auto weights = lagrange_weights_at_zero(points, f);
  FieldElement acc = f.zero();
  for (std::size_t i = 0; i < shares.size(); ++i) acc = f.add(acc, f.mul(shares[i].value, weights[i]));
  return acc;
}

inline std::vector<FieldElement> reconstruct_vector(std::span<const ShareVector> shares, const PrimeField& f) {
  if (shares.empty()) throw InsufficientShares("have 0 shares");
  const ShareVector& first = shares.front();
  std::vector<FieldElement> points;
  for (const ShareVector& s : shares) {
    if (s.degree_hint != first.degree_hint) throw DegreeMismatch("shares carry different degrees");
    if (s.size() != first.size()) throw LengthMismatch("share vectors differ in length");
    points.push_back(s.point);
  }
  detail::check_reconstructible(shares.size(), first.degree_hint);
  const auto weights = lagrange_weights_at_zero(points, f);
  std::vector<FieldElement> out(first.size(), f.zero());
  for (std::size_t i = 0; i < shares.size(); ++i) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = f.add(out[k], f.mul(shares[i].values[k], weights[i]));
  }
  return out;
}

namespace detail {

inline void check_compatible(const ShareVector& a, const ShareVector& b, bool same_degree) {
  if (a.point != b.point) throw PointMismatch("share points differ");
  if (same_degree && a.degree_hint != b.degree_hint) throw DegreeMismatch("share degrees differ");
  if (a.size() != b.size()) throw LengthMismatch("share vectors differ in length");
}

}  // namespace detail

inline ShareVector add_shares(const ShareVector& a, const ShareVector& b, const PrimeField& f) {
  detail::check_compatible(a, b, true);
  ShareVector out{a.point, std::vector<FieldElement>(a.size()), a.degree_hint};
  for (std::size_t k = 0; k < a.size(); ++k) out.values[k] = f.add(a.values[k], b.values[k]);
  return out;
}

inline ShareVector sub_shares(const ShareVector& a, const ShareVector& b, const PrimeField& f) {
  detail::check_compatible(a, b, true);
  ShareVector out{a.point, std::vector<FieldElement>(a.size()), a.degree_hint};
  for (std::size_t k = 0; k < a.size(); ++k) out.values[k] = f.sub(a.values[k], b.values[k]);
  return out;
}

inline ShareVector scalar_mul(FieldElement c, const ShareVector& a, const PrimeField& f) {
  ShareVector out{a.point, std::vector<FieldElement>(a.size()), a.degree_hint};
  for (std::size_t k = 0; k < a.size(); ++k) out.values[k] = f.mul(c, a.values[k]);
  return out;
}

// Share-wise product. Degrees add, and the scheme can only open degree
// 2l - 2, so exactly one multiplication of fresh shares is allowed.
inline ShareVector mul_shares(const ShareVector& a, const ShareVector& b, const ShareScheme& scheme) {
  detail::check_compatible(a, b, false);
  if (a.degree_hint + b.degree_hint > scheme.product_degree()) {
    throw DegreeOverflow("product degree " + std::to_string(a.degree_hint + b.degree_hint) +
                         " exceeds 2l-2 = " + std::to_string(scheme.product_degree()));
  }
  const PrimeField& f = scheme.field();
  ShareVector out{a.point, std::vector<FieldElement>(a.size()), a.degree_hint + b.degree_hint};
  for (std::size_t k = 0; k < a.size(); ++k) out.values[k] = f.mul(a.values[k], b.values[k]);
  return out;
}

// point (8) | degree_hint (1) | count (4) | elements (8 each), big-endian.
inline void write_share_vector(ByteWriter& w, const ShareVector& v) {
  if (v.degree_hint < 0 || v.degree_hint > 255) throw InvalidParams("degree_hint does not fit in a byte");
  if (v.size() > 0xFFFFFFFFu) throw InvalidParams("share vector too long");
  write_element(w, v.point);
  w.u8(static_cast<std::uint8_t>(v.degree_hint));
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (FieldElement e : v.values) write_element(w, e);
}

inline ShareVector read_share_vector(ByteReader& r, const PrimeField& f) {
  ShareVector v;
  v.point = read_element(r, f);
  v.degree_hint = r.u8();
  const std::uint32_t count = r.u32();
  if (r.remaining() / 8 < count) throw Malformed("share vector count exceeds payload");
  v.values.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) v.values.push_back(read_element(r, f));
  return v;
}

inline Bytes serialize(const ShareVector& v) {
  Bytes out;
  ByteWriter w(out);
  write_share_vector(w, v);
  return out;
}

inline ShareVector deserialize_share_vector(std::span<const std::uint8_t> data, const PrimeField& f) {
  ByteReader r(data);
  ShareVector v = read_share_vector(r, f);
  r.expect_done("share vector");
  return v;
}

}  // namespace sss_prnu
