#pragma once

#include "fisheye/image.hpp"

#include <limits>
#include <string>
#include <vector>

namespace fisheye {

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(1 / MSE) over the jointly valid pixels (unit peak). Returns
/// kPsnrIdentical when the images agree exactly. `mask`, when given, further
/// restricts the comparison.
double psnr(const ImageBuffer& a, const ImageBuffer& b, const Mask* mask = nullptr);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
};

/// Mean local SSIM over window centers whose full Gaussian window is valid in
/// both images (and the optional mask). RGB is reduced to luma first.
double ssim(const ImageBuffer& a, const ImageBuffer& b, const Mask* mask = nullptr,
            const SsimOptions& options = {});

/// Rec. 601 luma for RGB, pass-through for gray.
Plane<double> to_gray(const ImageBuffer& img);

struct PRResult {
  double precision = 0.0;
  double recall = 0.0;
  double f_value = 0.0;
  size_t matched_pred = 0;
  size_t total_pred = 0;
  size_t matched_truth = 0;
  size_t total_truth = 0;
  std::vector<std::string> warnings;
};

/// Binarizes both maps at > 0 (restricted to pixels valid in both) and
/// matches pixels within a Chebyshev tolerance.
PRResult line_map_pr(const LineMap& pred, const LineMap& truth, int tolerance_px = 1);

}  // namespace fisheye
