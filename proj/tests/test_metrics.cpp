#include "fisheye/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace fisheye;

namespace {

ImageBuffer noise_image(int w, int h, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageBuffer img(w, h, channels);
  for (auto& c : img.channels) c = c.unaryExpr([&](double) { return u(rng); });
  return img;
}

// Direct 2-D windowed formula, one window at a time.
double ssim_oracle(const Plane<double>& a, const Plane<double>& b, const Mask& valid) {
  const int win = 11, half = 5;
  const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
  Eigen::ArrayXXd k(win, win);
  for (int i = 0; i < win; ++i) {
    for (int j = 0; j < win; ++j) {
      k(i, j) = std::exp(-((i - half) * (i - half) + (j - half) * (j - half)) / (2 * sigma * sigma));
    }
  }
  k /= k.sum();
  double sum = 0.0;
  int count = 0;
  for (int r = 0; r + win <= a.rows(); ++r) {
    for (int c = 0; c + win <= a.cols(); ++c) {
      if (!valid.block(r, c, win, win).all()) continue;
      double mx = 0, my = 0;
      for (int i = 0; i < win; ++i) {
        for (int j = 0; j < win; ++j) {
          mx += k(i, j) * a(r + i, c + j);
          my += k(i, j) * b(r + i, c + j);
        }
      }
      double vx = 0, vy = 0, cxy = 0;
      for (int i = 0; i < win; ++i) {
        for (int j = 0; j < win; ++j) {
          const double dx = a(r + i, c + j) - mx, dy = b(r + i, c + j) - my;
          vx += k(i, j) * dx * dx;
          vy += k(i, j) * dy * dy;
          cxy += k(i, j) * dx * dy;
        }
      }
      sum += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return sum / count;
}

// Brute-force tolerant set intersection.
std::pair<double, double> pr_oracle(const LineMap& p, const LineMap& g, int tol) {
  auto pos = [](const LineMap& m) {
    std::vector<std::pair<int, int>> out;
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) {
        if (m.data(y, x) > 0) out.emplace_back(y, x);
      }
    }
    return out;
  };
  const auto ps = pos(p), gs = pos(g);
  auto frac = [&](const auto& from, const auto& to) {
    int hit = 0;
    for (const auto& [y, x] : from) {
      for (const auto& [yy, xx] : to) {
        if (std::abs(y - yy) <= tol && std::abs(x - xx) <= tol) {
          ++hit;
          break;
        }
      }
    }
    return static_cast<double>(hit) / from.size();
  };
  return {frac(ps, gs), frac(gs, ps)};
}

LineMap random_lines(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> px(0, w - 1), py(0, h - 1);
  LineMap m(w, h);
  for (int i = 0; i < 4; ++i) {
    const int y = py(rng);
    for (int x = px(rng) / 2; x < w; ++x) m.data(y, x) = 3.0;
    const int x0 = px(rng);
    for (int y2 = 0; y2 < h / 2; ++y2) m.data(y2, x0) = 2.0;
  }
  return m;
}

}  // namespace

TEST(Psnr, Examples) {
  const ImageBuffer a = noise_image(16, 12, 3, 1);
  EXPECT_EQ(psnr(a, a), kPsnrIdentical);
  const ImageBuffer z(16, 16, 1, 0.0), half(16, 16, 1, 0.5);
  EXPECT_NEAR(psnr(z, half), 10 * std::log10(4.0), 1e-12);
  EXPECT_NEAR(psnr(z, half), 6.0206, 1e-4);
}

TEST(Psnr, MonotoneInNoiseAmplitude) {
  const ImageBuffer base = noise_image(64, 64, 1, 2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Plane<double> n(64, 64);
  n = n.unaryExpr([&](double) { return u(rng); });
  double last = kPsnrIdentical;
  for (double amp : {0.01, 0.02, 0.05}) {
    ImageBuffer b = base;
    b.channels[0] += amp * n;
    const double v = psnr(base, b);
    EXPECT_LT(v, last);
    last = v;
  }
}

TEST(Psnr, MaskRespectingAndErrors) {
  ImageBuffer a(8, 8, 1, 0.2), b(8, 8, 1, 0.2);
  b.channels[0](3, 3) = 0.9;
  b.valid(3, 3) = false;
  EXPECT_EQ(psnr(a, b), kPsnrIdentical);
  b.channels[0](3, 3) = -5.0;
  EXPECT_EQ(psnr(a, b), kPsnrIdentical);
  Mask none = Mask::Constant(8, 8, false);
  EXPECT_THROW(psnr(a, b, &none), std::invalid_argument);
  EXPECT_THROW(psnr(a, ImageBuffer(8, 9, 1)), std::invalid_argument);
}

TEST(Ssim, IdenticalIsOne) {
  const ImageBuffer a = noise_image(40, 33, 3, 4);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, ConstantOffsetMatchesOracle) {
  const ImageBuffer a(32, 32, 1, 0.4), b(32, 32, 1, 0.5);
  const Mask all = Mask::Constant(32, 32, true);
  EXPECT_NEAR(ssim(a, b), ssim_oracle(a.channels[0], b.channels[0], all), 1e-9);
  EXPECT_LT(ssim(a, b), 1.0);
}

TEST(Ssim, RandomWithMaskMatchesOracle) {
  const ImageBuffer a = noise_image(37, 29, 1, 5);
  ImageBuffer b = a;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 0.1);
  b.channels[0] = b.channels[0].unaryExpr([&](double v) { return v + g(rng); });
  b.valid.block(10, 12, 4, 4).setConstant(false);
  const double v = ssim(a, b);
  EXPECT_NEAR(v, ssim_oracle(a.channels[0], b.channels[0], a.valid && b.valid), 1e-9);
  EXPECT_GE(v, -1.0);
  EXPECT_LE(v, 1.0);

  // Values under invalid pixels do not matter.
  ImageBuffer c = b;
  c.channels[0].block(10, 12, 4, 4).setConstant(7.0);
  EXPECT_EQ(ssim(a, c), v);
}

TEST(Ssim, RgbUsesLuma) {
  const ImageBuffer a = noise_image(20, 20, 3, 7);
  const ImageBuffer b = noise_image(20, 20, 3, 8);
  ImageBuffer ga(20, 20, 1), gb(20, 20, 1);
  ga.channels[0] = 0.299 * a.channels[0] + 0.587 * a.channels[1] + 0.114 * a.channels[2];
  gb.channels[0] = 0.299 * b.channels[0] + 0.587 * b.channels[1] + 0.114 * b.channels[2];
  EXPECT_NEAR(ssim(a, b), ssim(ga, gb), 1e-15);
}

TEST(Ssim, Errors) {
  EXPECT_THROW(ssim(ImageBuffer(10, 10, 1), ImageBuffer(10, 10, 1)), std::invalid_argument);
  ImageBuffer a(16, 16, 1);
  a.valid(8, 8) = false;
  a.valid(3, 12) = false;
  a.valid(12, 3) = false;
  a.valid(3, 3) = false;
  a.valid(12, 12) = false;
  EXPECT_THROW(ssim(a, a), std::invalid_argument);
}

TEST(LineMapPr, IdentityAndEmpty) {
  const LineMap m = random_lines(40, 30, 1);
  const PRResult r = line_map_pr(m, m);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(r.f_value, 1.0);
  EXPECT_TRUE(r.warnings.empty());

  const PRResult e = line_map_pr(LineMap(40, 30), m);
  EXPECT_EQ(e.precision, 0.0);
  EXPECT_EQ(e.recall, 0.0);
  EXPECT_EQ(e.f_value, 0.0);
  EXPECT_EQ(e.warnings.size(), 1u);
}

TEST(LineMapPr, ShiftOracle) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    LineMap g = random_lines(48, 40, 10 + s);
    g.data.col(47).setZero();
    LineMap p(48, 40);
    p.data.rightCols(47) = g.data.leftCols(47);
    const PRResult one = line_map_pr(p, g, 1);
    EXPECT_EQ(one.precision, 1.0);
    EXPECT_EQ(one.recall, 1.0);
    const auto [p1, r1] = pr_oracle(p, g, 1);
    EXPECT_EQ(one.recall, r1);
    EXPECT_EQ(one.precision, p1);

    const PRResult zero = line_map_pr(p, g, 0);
    const auto [p0, r0] = pr_oracle(p, g, 0);
    EXPECT_DOUBLE_EQ(zero.precision, p0);
    EXPECT_DOUBLE_EQ(zero.recall, r0);
    if (zero.precision + zero.recall > 0) {
      EXPECT_DOUBLE_EQ(zero.f_value, 2 * p0 * r0 / (p0 + r0));
    }
  }
}

TEST(LineMapPr, SwapSymmetry) {
  const LineMap a = random_lines(32, 32, 3), b = random_lines(32, 32, 4);
  const PRResult ab = line_map_pr(a, b), ba = line_map_pr(b, a);
  EXPECT_EQ(ab.precision, ba.recall);
  EXPECT_EQ(ab.recall, ba.precision);
  EXPECT_EQ(ab.f_value, ba.f_value);
}

TEST(LineMapPr, MaskRespectingAndErrors) {
  LineMap a = random_lines(32, 32, 5), b = a;
  b.data(0, 0) = 9.0;
  b.valid(0, 0) = false;
  EXPECT_EQ(line_map_pr(a, b).precision, 1.0);
  EXPECT_EQ(line_map_pr(b, a).precision, 1.0);
  EXPECT_THROW(line_map_pr(LineMap(4, 4), LineMap(4, 5)), std::invalid_argument);
  EXPECT_THROW(line_map_pr(a, a, -1), std::invalid_argument);
}
