#include "fisheye/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace fisheye {

namespace {

Mask joint_mask(const ImageBuffer& a, const ImageBuffer& b, const Mask* mask, const char* who) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw std::invalid_argument(std::string(who) + ": image sizes differ");
  }
  Mask m = a.valid && b.valid;
  if (mask) {
    if (mask->rows() != m.rows() || mask->cols() != m.cols()) {
      throw std::invalid_argument(std::string(who) + ": mask size differs");
    }
    m = m && *mask;
  }
  return m;
}

/// Integral image of invalid pixels for O(1) window validity queries.
Eigen::Array<long, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> invalid_integral(const Mask& m) {
  const auto h = m.rows();
  const auto w = m.cols();
  Eigen::Array<long, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> s =
      Eigen::Array<long, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(h + 1, w + 1);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      s(y + 1, x + 1) = s(y, x + 1) + s(y + 1, x) - s(y, x) + (m(y, x) ? 0 : 1);
    }
  }
  return s;
}

}  // namespace

double psnr(const ImageBuffer& a, const ImageBuffer& b, const Mask* mask) {
  if (a.channel_count() != b.channel_count()) throw std::invalid_argument("psnr: channel counts differ");
  const Mask m = joint_mask(a, b, mask, "psnr");
  const auto n = m.count();
  if (n == 0) throw std::invalid_argument("psnr: empty joint mask");
  double sum = 0.0;
  for (int c = 0; c < a.channel_count(); ++c) {
    sum += m.select((a.channels[c] - b.channels[c]).square(), 0.0).sum();
  }
  const double mse = sum / (static_cast<double>(n) * a.channel_count());
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(1.0 / mse);
}

Plane<double> to_gray(const ImageBuffer& img) {
  if (img.channel_count() == 1) return img.channels[0];
  if (img.channel_count() != 3) throw std::invalid_argument("to_gray: expected 1 or 3 channels");
  return 0.299 * img.channels[0] + 0.587 * img.channels[1] + 0.114 * img.channels[2];
}

double ssim(const ImageBuffer& a, const ImageBuffer& b, const Mask* mask, const SsimOptions& opt) {
  const Mask m = joint_mask(a, b, mask, "ssim");
  const int h = a.height();
  const int w = a.width();
  const int win = opt.window;
  const int half = win / 2;
  if (h < win || w < win) throw std::invalid_argument("ssim: image smaller than the window");

  std::vector<double> kernel(static_cast<size_t>(win));
  double ksum = 0.0;
  for (int i = 0; i < win; ++i) {
    kernel[i] = std::exp(-0.5 * (i - half) * (i - half) / (opt.sigma * opt.sigma));
    ksum += kernel[i];
  }
  for (auto& k : kernel) k /= ksum;

  // Invalid pixels are zeroed; windows touching them are skipped below.
  const Plane<double> x = m.select(to_gray(a), 0.0);
  const Plane<double> y = m.select(to_gray(b), 0.0);

  // Separable Gaussian filtering over "valid" positions only: output (r, c)
  // is the window centered at (r + half, c + half).
  auto filter = [&](const Plane<double>& in) {
    Plane<double> tmp(h, w - win + 1);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c + win <= w; ++c) {
        double acc = 0.0;
        for (int i = 0; i < win; ++i) acc += kernel[i] * in(r, c + i);
        tmp(r, c) = acc;
      }
    }
    Plane<double> out(h - win + 1, w - win + 1);
    for (int r = 0; r + win <= h; ++r) {
      for (int c = 0; c < w - win + 1; ++c) {
        double acc = 0.0;
        for (int i = 0; i < win; ++i) acc += kernel[i] * tmp(r + i, c);
        out(r, c) = acc;
      }
    }
    return out;
  };

  const Plane<double> mu_x = filter(x);
  const Plane<double> mu_y = filter(y);
  const Plane<double> e_xx = filter(x * x);
  const Plane<double> e_yy = filter(y * y);
  const Plane<double> e_xy = filter(x * y);
  const auto invalid = invalid_integral(m);

  double sum = 0.0;
  long count = 0;
  for (int r = 0; r < h - win + 1; ++r) {
    for (int c = 0; c < w - win + 1; ++c) {
      const long bad = invalid(r + win, c + win) - invalid(r, c + win) - invalid(r + win, c) + invalid(r, c);
      if (bad != 0) continue;
      const double mx = mu_x(r, c);
      const double my = mu_y(r, c);
      const double vx = e_xx(r, c) - mx * mx;
      const double vy = e_yy(r, c) - my * my;
      const double cxy = e_xy(r, c) - mx * my;
      sum += ((2 * mx * my + opt.c1) * (2 * cxy + opt.c2)) /
             ((mx * mx + my * my + opt.c1) * (vx + vy + opt.c2));
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("ssim: no fully valid window");
  return sum / static_cast<double>(count);
}

PRResult line_map_pr(const LineMap& pred, const LineMap& truth, int tolerance_px) {
  if (pred.width() != truth.width() || pred.height() != truth.height()) {
    throw std::invalid_argument("line_map_pr: map sizes differ");
  }
  if (tolerance_px < 0) throw std::invalid_argument("line_map_pr: negative tolerance");
  const int h = pred.height();
  const int w = pred.width();
  const Mask both = pred.valid && truth.valid;
  const Mask p = both && (pred.data > 0.0);
  const Mask g = both && (truth.data > 0.0);

  auto has_neighbor = [&](const Mask& set, int y, int x) {
    for (int dy = -tolerance_px; dy <= tolerance_px; ++dy) {
      for (int dx = -tolerance_px; dx <= tolerance_px; ++dx) {
        const int yy = y + dy;
        const int xx = x + dx;
        if (yy >= 0 && yy < h && xx >= 0 && xx < w && set(yy, xx)) return true;
      }
    }
    return false;
  };

  PRResult out;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (p(y, x)) {
        ++out.total_pred;
        if (has_neighbor(g, y, x)) ++out.matched_pred;
      }
      if (g(y, x)) {
        ++out.total_truth;
        if (has_neighbor(p, y, x)) ++out.matched_truth;
      }
    }
  }
  if (out.total_pred == 0) {
    out.warnings.emplace_back("prediction has no positive pixels; precision set to 0");
  } else {
    out.precision = static_cast<double>(out.matched_pred) / static_cast<double>(out.total_pred);
  }
  if (out.total_truth == 0) {
    out.warnings.emplace_back("ground truth has no positive pixels; recall set to 0");
  } else {
    out.recall = static_cast<double>(out.matched_truth) / static_cast<double>(out.total_truth);
  }
  const double s = out.precision + out.recall;
  out.f_value = s > 0.0 ? 2.0 * out.precision * out.recall / s : 0.0;
  return out;
}

}  // namespace fisheye
