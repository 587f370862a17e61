#include "sss_prnu/prnu.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracle.hpp"

namespace sss_prnu {
namespace {

// 2-D Gaussian weight for offset (i, j), normalized over the (2r+1)^2 window.
double kernel_2d(int i, int j, double sigma = 1.0, int r = 2) {
  double total = 0.0;
  for (int a = -r; a <= r; ++a) {
    for (int b = -r; b <= r; ++b) total += std::exp(-(a * a + b * b) / (2 * sigma * sigma));
  }
  return std::exp(-(i * i + j * j) / (2 * sigma * sigma)) / total;
}

// Direct (non-separable) convolution with clamp-to-edge borders.
Image direct_convolution(const Image& img, double sigma = 1.0, int r = 2) {
  const auto w = static_cast<int>(img.width()), h = static_cast<int>(img.height());
  Image out(img.width(), img.height());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int j = -r; j <= r; ++j) {
        for (int i = -r; i <= r; ++i) {
          const int xx = std::clamp(x + i, 0, w - 1), yy = std::clamp(y + j, 0, h - 1);
          acc += kernel_2d(i, j, sigma, r) * img.at(static_cast<std::size_t>(xx), static_cast<std::size_t>(yy));
        }
      }
      out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = acc;
    }
  }
  return out;
}

Image random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  Rng rng = Rng::seeded(seed);
  Image img(w, h);
  for (double& v : img.values()) v = 255.0 * rng.uniform01();
  return img;
}

TEST(DenoiseTest, ConstantImageUnchanged) {
  const Image img(12, 7, 93.25);
  const Image out = denoise(img);
  for (double v : out.values()) EXPECT_NEAR(v, 93.25, 1e-12);
  const NoiseMatrix res = extract_residual(img);
  for (double v : res.values()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(DenoiseTest, ImpulseGivesKernel) {
  Image img(9, 9, 0.0);
  img.at(4, 4) = 1.0;
  const Image out = denoise(img);
  for (int j = -4; j <= 4; ++j) {
    for (int i = -4; i <= 4; ++i) {
      const double expected = (std::abs(i) <= 2 && std::abs(j) <= 2) ? kernel_2d(i, j) : 0.0;
      EXPECT_NEAR(out.at(static_cast<std::size_t>(4 + i), static_cast<std::size_t>(4 + j)), expected, 1e-15);
    }
  }
}

TEST(DenoiseTest, MatchesDirectConvolutionIncludingBorders) {
  const Image img = random_image(11, 6, 30);
  const Image fast = denoise(img);
  const Image slow = direct_convolution(img);
  for (std::size_t k = 0; k < img.size(); ++k) EXPECT_NEAR(fast.values()[k], slow.values()[k], 1e-10);

  const GaussianDenoiser wide{1.7, 3};
  const Image fast_wide = denoise(img, wide);
  const Image slow_wide = direct_convolution(img, 1.7, 3);
  for (std::size_t k = 0; k < img.size(); ++k) EXPECT_NEAR(fast_wide.values()[k], slow_wide.values()[k], 1e-10);
}

TEST(DenoiseTest, RampPreservedInInterior) {
  Image img(16, 12);
  for (std::size_t y = 0; y < 12; ++y) {
    for (std::size_t x = 0; x < 16; ++x) img.at(x, y) = 10.0 + 2.0 * x + 3.0 * y;
  }
  const Image out = denoise(img);
  for (std::size_t y = 2; y < 10; ++y) {
    for (std::size_t x = 2; x < 14; ++x) EXPECT_NEAR(out.at(x, y), img.at(x, y), 1e-10);
  }
}

TEST(DenoiseTest, RejectsBadInput) {
  EXPECT_THROW(denoise(Image()), InvalidParams);
  Image img(3, 3, 1.0);
  img.at(1, 1) = std::nan("");
  EXPECT_THROW(denoise(img), InvalidParams);
  EXPECT_THROW(denoise(Image(3, 3, 1.0), GaussianDenoiser{0.0, 2}), InvalidParams);
}

TEST(ResidualTest, ImpulseOnFlatBackground) {
  Image img(15, 15, 50.0);
  img.at(7, 7) = 150.0;
  const NoiseMatrix res = extract_residual(img);
  for (int j = -7; j <= 7; ++j) {
    for (int i = -7; i <= 7; ++i) {
      const double smooth = 50.0 + ((std::abs(i) <= 2 && std::abs(j) <= 2) ? 100.0 * kernel_2d(i, j) : 0.0);
      const double expected = img.at(static_cast<std::size_t>(7 + i), static_cast<std::size_t>(7 + j)) - smooth;
      EXPECT_NEAR(res.at(static_cast<std::size_t>(7 + i), static_cast<std::size_t>(7 + j)), expected, 1e-10);
    }
  }
  double max_elsewhere = 0.0;
  for (std::size_t k = 0; k < res.size(); ++k) {
    if (k != 7 * 15 + 7) max_elsewhere = std::max(max_elsewhere, std::fabs(res.values()[k]));
  }
  EXPECT_GT(res.at(7, 7), 5.0 * max_elsewhere);
}

TEST(FingerprintTest, SingleImageAndCopies) {
  const Image img = random_image(10, 8, 31);
  const std::vector<Image> one{img};
  const std::vector<Image> copies(5, img);
  const NoiseMatrix res = extract_residual(img);
  EXPECT_EQ(estimate_fingerprint(one), res);
  const NoiseMatrix avg = estimate_fingerprint(copies);
  for (std::size_t k = 0; k < res.size(); ++k) EXPECT_NEAR(avg.values()[k], res.values()[k], 1e-12);
}

TEST(FingerprintTest, Errors) {
  EXPECT_THROW(estimate_fingerprint(std::vector<Image>{}), EmptySet);
  const std::vector<Image> mixed{Image(4, 4, 1.0), Image(4, 5, 1.0)};
  EXPECT_THROW(estimate_fingerprint(mixed), DimensionMismatch);
}

TEST(PearsonTest, Identities) {
  const NoiseMatrix x = grid_cast<NoiseMatrix>(random_image(8, 8, 32));
  NoiseMatrix neg = x, affine = x;
  for (double& v : neg.values()) v = -v;
  for (double& v : affine.values()) v = 3.5 * v - 7.0;
  EXPECT_NEAR(pearson(x, x), 1.0, 1e-15);
  EXPECT_NEAR(pearson(x, neg), -1.0, 1e-15);
  EXPECT_NEAR(pearson(x, affine), 1.0, 1e-12);
}

TEST(PearsonTest, PropertiesOnRandomInputs) {
  Rng rng = Rng::seeded(33);
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 2 + rng.below(100);
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = rng.normal();
    for (auto& v : y) v = rng.normal() + 0.3 * x[&v - y.data()];
    const double r = pearson(std::span<const double>(x), std::span<const double>(y));
    ASSERT_LE(std::fabs(r), 1.0);
    ASSERT_EQ(r, pearson(std::span<const double>(y), std::span<const double>(x)));
    ASSERT_NEAR(r, oracle::float_pearson(x, y), 1e-12);
    std::vector<double> z(y);
    for (auto& v : z) v = 2.0 * v + 5.0;
    ASSERT_EQ(match_decision(r, 0.2), match_decision(pearson(std::span<const double>(x), std::span<const double>(z)), 0.2));
  }
}

TEST(PearsonTest, Errors) {
  const std::vector<double> a{1, 2, 3}, b{1, 2}, c{4, 4, 4};
  EXPECT_THROW(pearson(std::span<const double>(a), std::span<const double>(b)), DimensionMismatch);
  EXPECT_THROW(pearson(std::span<const double>(a), std::span<const double>(c)), DegenerateInput);
  const std::vector<double> tiny{0.1, 0.1, 0.1};
  EXPECT_THROW(pearson(std::span<const double>(tiny), std::span<const double>(a)), DegenerateInput);
  EXPECT_THROW(pearson(NoiseMatrix(2, 3), NoiseMatrix(3, 2)), DimensionMismatch);
}

TEST(MatchDecisionTest, Examples) {
  EXPECT_TRUE(match_decision(0.5333, 0.3));
  EXPECT_FALSE(match_decision(0.0019, 0.3));
  EXPECT_TRUE(match_decision(0.3, 0.3));
  EXPECT_FALSE(match_decision(std::nextafter(0.3, 0.0), 0.3));
}

TEST(SyntheticCameraTest, DeterministicAndBounded) {
  SyntheticCamera a(32, 16, 0.02, 2.0, 7), b(32, 16, 0.02, 2.0, 7), c(32, 16, 0.02, 2.0, 8);
  EXPECT_EQ(a.prnu_pattern(), b.prnu_pattern());
  EXPECT_NE(a.prnu_pattern(), c.prnu_pattern());
  const Image ia = a.capture();
  EXPECT_EQ(ia, b.capture());
  EXPECT_NE(ia, a.capture());
  for (double v : ia.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 255.0);
  }
  EXPECT_THROW(SyntheticCamera(0, 4, 0.02, 2.0, 1), InvalidParams);
}

TEST(SyntheticCameraTest, FingerprintTracksPattern) {
  SyntheticCamera cam(64, 64, 0.02, 2.0, 11);
  std::vector<Image> imgs;
  for (int i = 0; i < 20; ++i) imgs.push_back(cam.capture());
  const NoiseMatrix fp = estimate_fingerprint(imgs);
  EXPECT_GT(pearson(fp, cam.prnu_pattern()), 0.5);
}

TEST(SyntheticCameraTest, SameCameraBeatsCrossCamera) {
  const int cameras = 20;
  std::vector<NoiseMatrix> fps;
  std::vector<NoiseMatrix> queries;
  for (int c = 0; c < cameras; ++c) {
    SyntheticCamera cam(64, 64, 0.02, 2.0, 1000 + static_cast<std::uint64_t>(c));
    std::vector<Image> imgs;
    for (int i = 0; i < 20; ++i) imgs.push_back(cam.capture());
    fps.push_back(estimate_fingerprint(imgs));
    queries.push_back(extract_residual(cam.capture()));
  }
  double min_same = 1.0, max_cross = -1.0;
  for (int c = 0; c < cameras; ++c) {
    for (int q = 0; q < cameras; ++q) {
      const double r = pearson(fps[static_cast<std::size_t>(c)], queries[static_cast<std::size_t>(q)]);
      if (c == q) min_same = std::min(min_same, r);
      else max_cross = std::max(max_cross, r);
    }
  }
  EXPECT_GT(min_same, max_cross);
}

}  // namespace
}  // namespace sss_prnu
