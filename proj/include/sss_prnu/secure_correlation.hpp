#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sss_prnu/bytes.hpp"
#include "sss_prnu/error.hpp"
#include "sss_prnu/field.hpp"
#include "sss_prnu/fixed_point.hpp"
#include "sss_prnu/prnu.hpp"
#include "sss_prnu/random.hpp"
#include "sss_prnu/secret_sharing.hpp"

namespace sss_prnu {

// One server's share of an encoded matrix plus the public encoding metadata.
struct EncryptedVector {
  ShareVector shares;
  Scaling scaling;
  CenteringMode mode = CenteringMode::kPlaintext;
  bool centered = false;
  // Public bound on |encoded element| before any server-side centering;
  // 0 when unknown (e.g. rebuilt from the wire).
  std::uint64_t max_encoded = 0;

  std::size_t size() const { return shares.size(); }
};

// A server's E(P^i), E(Q^i), E(R^i).
struct PartialCorrelation {
  FieldElement point;
  FieldElement p_share;
  FieldElement q_share;
  FieldElement r_share;
  int degree_hint = 0;

  bool operator==(const PartialCorrelation&) const = default;
};

struct CorrelationSums {
  FieldElement p, q, r;  // reconstructed field values
  double p_val = 0.0, q_val = 0.0, r_val = 0.0;
  std::vector<FieldElement> server_subset;
};

struct MatchResult {
  double r = 0.0;
  double p_val = 0.0, q_val = 0.0, r_val = 0.0;
  double threshold = 0.0;
  bool matched = false;
  std::vector<std::uint64_t> server_subset;

  // Compares everything except which servers answered.
  bool same_outcome(const MatchResult& o) const {
    return r == o.r && p_val == o.p_val && q_val == o.q_val && r_val == o.r_val && threshold == o.threshold &&
           matched == o.matched;
  }

  bool operator==(const MatchResult&) const = default;
};

// Encodes and shares a matrix. Plaintext mode removes the mean first; in
// encrypted mode the raw values are shared and the servers center with
// center_shares.
inline std::vector<EncryptedVector> prepare_vector(std::span<const double> values, const Scaling& s,
                                                   const ShareScheme& scheme, CenteringMode mode, Rng& rng) {
  if (values.empty()) throw InvalidParams("cannot share an empty matrix");
  const PrimeField& f = scheme.field();
  std::vector<double> source(values.begin(), values.end());
  if (mode == CenteringMode::kPlaintext) {
    const double mu = mean(values);
    for (double& v : source) v -= mu;
  }
  double max_abs = 0.0;
  for (double v : source) max_abs = std::max(max_abs, std::fabs(v));
  capacity_check(source.size(), max_abs, s, mode, f);

  std::vector<FieldElement> encoded(source.size());
  std::uint64_t max_encoded = 0;
  for (std::size_t k = 0; k < source.size(); ++k) {
    encoded[k] = encode(source[k], s, f);
    max_encoded = std::max<std::uint64_t>(max_encoded, static_cast<std::uint64_t>(std::llabs(f.to_signed(encoded[k]))));
  }
  std::vector<EncryptedVector> out;
  for (ShareVector& sv : share_vector(encoded, scheme, rng)) {
    out.push_back(EncryptedVector{std::move(sv), s, mode, mode == CenteringMode::kPlaintext, max_encoded});
  }
  return out;
}

inline std::vector<EncryptedVector> prepare_vector(const NoiseMatrix& m, const Scaling& s, const ShareScheme& scheme,
                                                   CenteringMode mode, Rng& rng) {
  return prepare_vector(m.values(), s, scheme, mode, rng);
}

// Server-side centering. Subtracts the share of the mean, then multiplies
// by element_count so the result is a share of n * x_k - sum(x), an integer.
inline EncryptedVector center_shares(const EncryptedVector& v, std::size_t element_count, const PrimeField& f) {
  if (v.mode != CenteringMode::kEncrypted || v.centered) {
    throw InvalidParams("center_shares applies to uncentered vectors in encrypted-centering mode");
  }
  if (element_count == 0 || element_count != v.size()) throw LengthMismatch("element count does not match vector");
  if (v.max_encoded != 0) {
    const double max_abs = static_cast<double>(v.max_encoded) / static_cast<double>(v.scaling.scale());
    capacity_check(element_count, max_abs, v.scaling, CenteringMode::kEncrypted, f);
  }
  const FieldElement n = f.from_u64(element_count);
  FieldElement sum = f.zero();
  for (FieldElement e : v.shares.values) sum = f.add(sum, e);
  const FieldElement mean_share = f.mul(f.inv(n), sum);

  ShareVector centered{v.shares.point, std::vector<FieldElement>(v.size()), v.shares.degree_hint};
  for (std::size_t k = 0; k < v.size(); ++k) centered.values[k] = f.sub(v.shares.values[k], mean_share);

  EncryptedVector out = v;
  out.shares = scalar_mul(n, centered, f);
  out.centered = true;
  return out;
}

// Local to one server: one share-wise multiplication per sum, then additions.
inline PartialCorrelation compute_partials(const EncryptedVector& a, const EncryptedVector& b,
                                           const ShareScheme& scheme) {
  if (!a.centered || !b.centered) throw InvalidParams("compute_partials needs centered inputs");
  if (a.mode != b.mode) throw InvalidParams("inputs use different centering modes");
  if (a.shares.degree_hint != scheme.fresh_degree() || b.shares.degree_hint != scheme.fresh_degree()) {
    throw DegreeMismatch("compute_partials needs fresh (degree l-1) shares");
  }
  const PrimeField& f = scheme.field();
  auto sum = [&](const ShareVector& v) {
    FieldElement acc = f.zero();
    for (FieldElement e : v.values) acc = f.add(acc, e);
    return acc;
  };
  const ShareVector ab = mul_shares(a.shares, b.shares, scheme);
  const ShareVector aa = mul_shares(a.shares, a.shares, scheme);
  const ShareVector bb = mul_shares(b.shares, b.shares, scheme);
  return PartialCorrelation{a.shares.point, sum(ab), sum(aa), sum(bb), ab.degree_hint};
}

// Opens P, Q and R by Lagrange interpolation through every given partial.
inline CorrelationSums reconstruct_partials(std::span<const PartialCorrelation> parts, const ShareScheme& scheme,
                                            const Scaling& s, CenteringMode mode, std::size_t element_count) {
  const PrimeField& f = scheme.field();
  if (parts.size() < static_cast<std::size_t>(scheme.quorum())) {
    throw InsufficientShares("have " + std::to_string(parts.size()) + " partials, need " +
                             std::to_string(scheme.quorum()));
  }
  std::vector<Share> ps, qs, rs;
  CorrelationSums out;
  for (const PartialCorrelation& part : parts) {
    if (part.degree_hint != scheme.product_degree()) throw DegreeMismatch("partial is not a product share");
    ps.push_back(Share{part.point, part.p_share, part.degree_hint});
    qs.push_back(Share{part.point, part.q_share, part.degree_hint});
    rs.push_back(Share{part.point, part.r_share, part.degree_hint});
    out.server_subset.push_back(part.point);
  }
  out.p = reconstruct(ps, f);
  out.q = reconstruct(qs, f);
  out.r = reconstruct(rs, f);
  if (f.to_signed(out.q) < 0 || f.to_signed(out.r) < 0) {
    throw NegativeSquareSum("reconstructed sum of squares is negative (tampering or capacity overflow)");
  }
  double extra = 1.0;
  if (mode == CenteringMode::kEncrypted) {
    const double n = static_cast<double>(element_count);
    extra = n * n;
  }
  out.p_val = decode(out.p, s, f, 2, extra);
  out.q_val = decode(out.q, s, f, 2, extra);
  out.r_val = decode(out.r, s, f, 2, extra);
  return out;
}

// r = P / sqrt(Q R) in plaintext, then the threshold test.
inline MatchResult finalize(double p, double q, double r, double threshold) {
  if (!(q > 0.0) || !(r > 0.0)) throw DegenerateInput("zero variance in reconstructed sums");
  MatchResult out;
  out.p_val = p;
  out.q_val = q;
  out.r_val = r;
  out.r = std::clamp(p / std::sqrt(q * r), -1.0, 1.0);
  out.threshold = threshold;
  out.matched = match_decision(out.r, threshold);
  return out;
}

inline MatchResult finalize(const CorrelationSums& sums, double threshold) {
  MatchResult out = finalize(sums.p_val, sums.q_val, sums.r_val, threshold);
  for (FieldElement pt : sums.server_subset) out.server_subset.push_back(pt.value);
  return out;
}

// Whole pipeline in one process: share both matrices, compute every
// server's partials, open with the first quorum of servers.
inline MatchResult correlate_encrypted(std::span<const double> fingerprint, std::span<const double> residual,
                                       const ShareScheme& scheme, const Scaling& s, CenteringMode mode,
                                       double threshold, Rng& rng) {
  if (fingerprint.size() != residual.size()) throw DimensionMismatch("inputs differ in size");
  const PrimeField& f = scheme.field();
  auto enc_x = prepare_vector(fingerprint, s, scheme, mode, rng);
  auto enc_y = prepare_vector(residual, s, scheme, mode, rng);
  std::vector<PartialCorrelation> parts;
  for (int i = 0; i < scheme.quorum(); ++i) {
    EncryptedVector a = enc_x[static_cast<std::size_t>(i)];
    EncryptedVector b = enc_y[static_cast<std::size_t>(i)];
    if (mode == CenteringMode::kEncrypted) {
      a = center_shares(a, a.size(), f);
      b = center_shares(b, b.size(), f);
    }
    parts.push_back(compute_partials(a, b, scheme));
  }
  return finalize(reconstruct_partials(parts, scheme, s, mode, fingerprint.size()), threshold);
}

// point | p_share | q_share | r_share, 8 bytes each, big-endian.
inline void write_partial(ByteWriter& w, const PartialCorrelation& part) {
  write_element(w, part.point);
  write_element(w, part.p_share);
  write_element(w, part.q_share);
  write_element(w, part.r_share);
}

inline PartialCorrelation read_partial(ByteReader& r, const ShareScheme& scheme) {
  const PrimeField& f = scheme.field();
  PartialCorrelation part;
  part.point = read_element(r, f);
  part.p_share = read_element(r, f);
  part.q_share = read_element(r, f);
  part.r_share = read_element(r, f);
  part.degree_hint = scheme.product_degree();
  return part;
}

}  // namespace sss_prnu
