#pragma once

#include <Eigen/Core>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

namespace fisheye {

template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// H x W raster with 1 or 3 channels of values in [0, 1] and a validity mask.
/// Pixel (x, y) has its center at integer coordinates; row index is y.
template <typename Scalar_ = double>
struct BasicImage {
  using Scalar = Scalar_;

  std::vector<Plane<Scalar>> channels;
  Mask valid;

  BasicImage() = default;
  BasicImage(int width, int height, int channel_count, Scalar fill = Scalar(0))
      : channels(channel_count, Plane<Scalar>::Constant(height, width, fill)),
        valid(Mask::Constant(height, width, true)) {
    if (channel_count != 1 && channel_count != 3) {
      throw std::invalid_argument("BasicImage: channel count must be 1 or 3");
    }
  }

  int width() const { return static_cast<int>(valid.cols()); }
  int height() const { return static_cast<int>(valid.rows()); }
  int channel_count() const { return static_cast<int>(channels.size()); }
  bool empty() const { return channels.empty() || valid.size() == 0; }

  /// Zeroes every channel wherever the mask is false.
  void enforce_mask() {
    for (auto& c : channels) c = valid.select(c, Scalar(0));
  }
};

using ImageBuffer = BasicImage<double>;

/// Scalar raster of line-segment lengths; zero off-line.
struct LineMap {
  Plane<double> data;
  Mask valid;

  LineMap() = default;
  LineMap(int width, int height)
      : data(Plane<double>::Zero(height, width)), valid(Mask::Constant(height, width, true)) {}

  int width() const { return static_cast<int>(data.cols()); }
  int height() const { return static_cast<int>(data.rows()); }
};

/// Bilinear sample of a plane at (x, y). Returns nullopt unless all four
/// neighbours lie inside the raster and are valid. Samples on the last
/// row/column use the degenerate cell so exact boundary hits stay valid.
template <typename Scalar>
std::optional<Scalar> sample_bilinear(const Plane<Scalar>& plane, const Mask& valid, double x,
                                      double y) {
  const int w = static_cast<int>(plane.cols());
  const int h = static_cast<int>(plane.rows());
  if (!(x >= 0.0 && y >= 0.0 && x <= w - 1 && y <= h - 1)) return std::nullopt;
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  if (x0 == w - 1 && w > 1) --x0;
  if (y0 == h - 1 && h > 1) --y0;
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  if (!(valid(y0, x0) && valid(y0, x1) && valid(y1, x0) && valid(y1, x1))) return std::nullopt;
  const Scalar ax = Scalar(x - x0);
  const Scalar ay = Scalar(y - y0);
  // Convex form so that integer positions return stored values exactly.
  const Scalar top = (Scalar(1) - ax) * plane(y0, x0) + ax * plane(y0, x1);
  const Scalar bottom = (Scalar(1) - ax) * plane(y1, x0) + ax * plane(y1, x1);
  return (Scalar(1) - ay) * top + ay * bottom;
}

}  // namespace fisheye
