#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sss_prnu/error.hpp"
#include "sss_prnu/random.hpp"

namespace sss_prnu {

// Row-major real matrix. The tag keeps images and noise matrices from being
// mixed up; convert explicitly with grid_cast.
template <typename Tag>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t width, std::size_t height, double fill = 0.0)
      : width_(width), height_(height), values_(width * height, fill) {}
  Grid(std::size_t width, std::size_t height, std::vector<double> values)
      : width_(width), height_(height), values_(std::move(values)) {
    if (values_.size() != width_ * height_) throw DimensionMismatch("value count does not match width * height");
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& at(std::size_t x, std::size_t y) { return values_[y * width_ + x]; }
  double at(std::size_t x, std::size_t y) const { return values_[y * width_ + x]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool same_shape(const auto& other) const { return width_ == other.width() && height_ == other.height(); }

  bool operator==(const Grid&) const = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<double> values_;
};

struct ImageTag {};
struct NoiseTag {};

// Grayscale luminance, nominally in [0, 255].
using Image = Grid<ImageTag>;
// A camera fingerprint or a single-image noise residual.
using NoiseMatrix = Grid<NoiseTag>;

template <typename To, typename From>
To grid_cast(const From& g) {
  return To(g.width(), g.height(), std::vector<double>(g.values().begin(), g.values().end()));
}

// ITU-R BT.601 luma.
inline double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

struct GaussianDenoiser {
  double sigma = 1.0;
  int radius = 2;

  // Normalized 1-D taps for offsets -radius..radius.
  std::vector<double> taps() const {
    if (!(sigma > 0.0) || radius < 0) throw InvalidParams("gaussian denoiser needs sigma > 0 and radius >= 0");
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
      k[static_cast<std::size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
      sum += k[static_cast<std::size_t>(i + radius)];
    }
    for (double& v : k) v /= sum;
    return k;
  }
};

// Add alternatives (e.g. a wavelet filter) as further variant members.
using Denoiser = std::variant<GaussianDenoiser>;

namespace detail {

inline void check_image(const Image& img) {
  if (img.empty()) throw InvalidParams("image has no pixels");
  for (double v : img.values()) {
    if (!std::isfinite(v)) throw InvalidParams("image contains non-finite values");
  }
}

inline Image apply(const GaussianDenoiser& g, const Image& img) {
  const auto taps = g.taps();
  const int r = g.radius;
  const auto w = static_cast<std::ptrdiff_t>(img.width());
  const auto h = static_cast<std::ptrdiff_t>(img.height());
  auto clamp = [](std::ptrdiff_t v, std::ptrdiff_t hi) { return std::clamp<std::ptrdiff_t>(v, 0, hi - 1); };

  Image horiz(img.width(), img.height());
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        acc += taps[static_cast<std::size_t>(i + r)] * img.at(static_cast<std::size_t>(clamp(x + i, w)),
                                                              static_cast<std::size_t>(y));
      }
      horiz.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = acc;
    }
  }
  Image out(img.width(), img.height());
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        acc += taps[static_cast<std::size_t>(i + r)] * horiz.at(static_cast<std::size_t>(x),
                                                                static_cast<std::size_t>(clamp(y + i, h)));
      }
      out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = acc;
    }
  }
  return out;
}

}  // namespace detail

// Low-pass estimate of the noise-free image. Borders replicate the edge.
inline Image denoise(const Image& img, const Denoiser& f = GaussianDenoiser{}) {
  detail::check_image(img);
  return std::visit([&](const auto& filter) { return detail::apply(filter, img); }, f);
}

// img - denoise(img).
inline NoiseMatrix extract_residual(const Image& img, const Denoiser& f = GaussianDenoiser{}) {
  const Image smooth = denoise(img, f);
  NoiseMatrix out(img.width(), img.height());
  auto dst = out.values();
  auto src = img.values();
  auto low = smooth.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] - low[i];
  return out;
}

// Mean residual over an enrollment set.
inline NoiseMatrix estimate_fingerprint(std::span<const Image> imgs, const Denoiser& f = GaussianDenoiser{}) {
  if (imgs.empty()) throw EmptySet("no images to estimate a fingerprint from");
  for (const Image& img : imgs) {
    if (!img.same_shape(imgs.front())) {
      throw DimensionMismatch("image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                              " differs from " + std::to_string(imgs.front().width()) + "x" +
                              std::to_string(imgs.front().height()));
    }
  }
  NoiseMatrix acc(imgs.front().width(), imgs.front().height());
  for (const Image& img : imgs) {
    const NoiseMatrix res = extract_residual(img, f);
    auto dst = acc.values();
    auto src = res.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  const double k = static_cast<double>(imgs.size());
  for (double& v : acc.values()) v /= k;
  return acc;
}

inline double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Pearson correlation over the flattened matrices.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionMismatch("pearson inputs differ in size");
  if (x.empty()) throw DegenerateInput("pearson of empty inputs");
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
  };
  if (constant(x) || constant(y)) throw DegenerateInput("zero variance");
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = x[k] - mx;
    const double dy = y[k] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInput("zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

template <typename TagA, typename TagB>
double pearson(const Grid<TagA>& x, const Grid<TagB>& y) {
  if (!x.same_shape(y)) throw DimensionMismatch("pearson inputs differ in shape");
  return pearson(x.values(), y.values());
}

// Inclusive: a correlation equal to the threshold is a match.
inline bool match_decision(double r, double threshold) { return r >= threshold; }

// Sensor model L = L0 + L0 * K + xi for test data. The scene L0 is smooth so
// that the default denoiser removes most of it.
class SyntheticCamera {
 public:
  SyntheticCamera(std::size_t width, std::size_t height, double pattern_std, double shot_noise_sigma,
                  std::uint64_t seed)
      : pattern_(width, height), shot_noise_sigma_(shot_noise_sigma), rng_(Rng::seeded(seed, 1)) {
    if (width == 0 || height == 0) throw InvalidParams("camera size must be positive");
    Rng pattern_rng = Rng::seeded(seed, 0);
    for (double& v : pattern_.values()) v = pattern_std * pattern_rng.normal();
  }

  const NoiseMatrix& prnu_pattern() const { return pattern_; }
  double shot_noise_sigma() const { return shot_noise_sigma_; }

  Image capture() {
    const std::size_t w = pattern_.width();
    const std::size_t h = pattern_.height();
    const double base = 100.0 + 50.0 * rng_.uniform01();
    struct Wave {
      double amp, fx, fy, phase;
    };
    std::vector<Wave> waves;
    for (int j = 0; j < 3; ++j) {
      waves.push_back(Wave{8.0 + 12.0 * rng_.uniform01(), 2.0 * rng_.uniform01() - 1.0,
                           2.0 * rng_.uniform01() - 1.0, 2.0 * std::numbers::pi * rng_.uniform01()});
    }
    Image img(w, h);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double scene = base;
        for (const Wave& wv : waves) {
          scene += wv.amp * std::sin(2.0 * std::numbers::pi *
                                         (wv.fx * static_cast<double>(x) / static_cast<double>(w) +
                                          wv.fy * static_cast<double>(y) / static_cast<double>(h)) +
                                     wv.phase);
        }
        const double value = scene * (1.0 + pattern_.at(x, y)) + shot_noise_sigma_ * rng_.normal();
        img.at(x, y) = std::clamp(value, 0.0, 255.0);
      }
    }
    return img;
  }

 private:
  NoiseMatrix pattern_;
  double shot_noise_sigma_;
  Rng rng_;
};

}  // namespace sss_prnu
