#include "fisheye/rectifier.hpp"

#include <cmath>
#include <stdexcept>

namespace fisheye {

RemapGrid RemapGrid::identity(int width, int height) {
  RemapGrid g;
  g.u.resize(height, width);
  g.v.resize(height, width);
  g.valid = Mask::Constant(height, width, true);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      g.u(y, x) = x;
      g.v(y, x) = y;
    }
  }
  return g;
}

VirtualPinholed default_pinhole(int width, int height, double theta_max) {
  if (width < 1 || height < 1) throw std::invalid_argument("default_pinhole: empty raster");
  VirtualPinholed p;
  p.width = width;
  p.height = height;
  p.f = 0.5 * std::min(width, height) / std::tan(0.9 * theta_max);
  return p;
}

namespace {

void require_monotone(const FisheyeParamsd& params, const char* who) {
  if (!check_monotonic(params)) {
    throw NonMonotoneError(std::string(who) + ": parameters are not monotone on [0, theta_max]");
  }
}

}  // namespace

RemapGrid build_remap(const FisheyeParamsd& params, const VirtualPinholed& pinhole,
                      int source_width, int source_height) {
  require_monotone(params, "build_remap");
  RemapGrid g;
  g.u = Plane<double>::Zero(pinhole.height, pinhole.width);
  g.v = Plane<double>::Zero(pinhole.height, pinhole.width);
  g.valid = Mask::Constant(pinhole.height, pinhole.width, false);
  for (int y = 0; y < pinhole.height; ++y) {
    for (int x = 0; x < pinhole.width; ++x) {
      const Angled ray = pinhole_angle(Pixel(x, y), pinhole);
      if (ray.theta > params.theta_max) continue;
      const Pixel src = project_ray(ray, params);
      g.u(y, x) = src.x();
      g.v(y, x) = src.y();
      g.valid(y, x) = src.x() >= 0.0 && src.y() >= 0.0 && src.x() <= source_width - 1 &&
                      src.y() <= source_height - 1;
    }
  }
  return g;
}

RemapGrid build_remap(const FisheyeParamsd& params, const VirtualPinholed& pinhole) {
  return build_remap(params, pinhole, pinhole.width, pinhole.height);
}

RemapGrid build_inverse_remap(const FisheyeParamsd& params, const VirtualPinholed& pinhole,
                              int fisheye_width, int fisheye_height) {
  require_monotone(params, "build_inverse_remap");
  const double rho_max = radial_profile_unchecked(params.theta_max, params);
  RemapGrid g;
  g.u = Plane<double>::Zero(fisheye_height, fisheye_width);
  g.v = Plane<double>::Zero(fisheye_height, fisheye_width);
  g.valid = Mask::Constant(fisheye_height, fisheye_width, false);
  for (int y = 0; y < fisheye_height; ++y) {
    for (int x = 0; x < fisheye_width; ++x) {
      const Pixel p(x, y);
      if (image_radius(p, params) > rho_max) continue;
      const Pixel rect = rectify_point_unchecked(p, params, pinhole);
      g.u(y, x) = rect.x();
      g.v(y, x) = rect.y();
      g.valid(y, x) = rect.x() >= 0.0 && rect.y() >= 0.0 && rect.x() <= pinhole.width - 1 &&
                      rect.y() <= pinhole.height - 1;
    }
  }
  return g;
}

ImageBuffer rectify_image(const ImageBuffer& img, const RemapGrid& grid) {
  if (img.empty()) throw std::invalid_argument("rectify_image: empty image");
  for (const auto& c : img.channels) {
    if (c.rows() != img.height() || c.cols() != img.width()) {
      throw std::invalid_argument("rectify_image: channel size does not match mask");
    }
  }
  if (grid.u.rows() != grid.height() || grid.u.cols() != grid.width() ||
      grid.v.rows() != grid.height() || grid.v.cols() != grid.width()) {
    throw std::invalid_argument("rectify_image: malformed grid");
  }
  ImageBuffer out(grid.width(), grid.height(), img.channel_count());
  out.valid.setConstant(false);
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      if (!grid.valid(y, x)) continue;
      bool ok = true;
      for (int c = 0; c < img.channel_count() && ok; ++c) {
        const auto s = sample_bilinear(img.channels[c], img.valid, grid.u(y, x), grid.v(y, x));
        if (s) {
          out.channels[c](y, x) = *s;
        } else {
          ok = false;
        }
      }
      out.valid(y, x) = ok;
    }
  }
  out.enforce_mask();
  return out;
}

std::vector<std::optional<Pixel>> rectify_points(const std::vector<Pixel>& points,
                                                 const FisheyeParamsd& params,
                                                 const VirtualPinholed& pinhole) {
  require_monotone(params, "rectify_points");
  const double rho_max = radial_profile_unchecked(params.theta_max, params);
  std::vector<std::optional<Pixel>> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    if (!p.allFinite() || image_radius(p, params) > rho_max) {
      out.emplace_back(std::nullopt);
    } else {
      out.emplace_back(rectify_point_unchecked(p, params, pinhole));
    }
  }
  return out;
}

LineMap rectify_line_map(const LineMap& map, const RemapGrid& grid) {
  LineMap out(grid.width(), grid.height());
  out.valid.setConstant(false);
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      if (!grid.valid(y, x)) continue;
      const auto s = sample_bilinear(map.data, map.valid, grid.u(y, x), grid.v(y, x));
      if (!s) continue;
      out.data(y, x) = *s;
      out.valid(y, x) = true;
    }
  }
  return out;
}

LineMap rectify_line_map(const LineMap& map, const FisheyeParamsd& params,
                         const VirtualPinholed& pinhole) {
  return rectify_line_map(map, build_remap(params, pinhole, map.width(), map.height()));
}

}  // namespace fisheye
