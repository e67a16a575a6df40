#include "fisheye/dataset_synth.hpp"

#include "fisheye/rectifier.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fisheye {

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double SplitMix64::normal() {
  // Box-Muller; u1 is kept away from zero.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  SplitMix64 a(master);
  const std::uint64_t base = a.next();
  SplitMix64 b(base ^ (index * 0xD1B54A32D192ED03ull + 0x8CB92BA72F3D8DD7ull));
  return b.next();
}

FisheyeParamsd sample_params(std::uint64_t seed, const SamplerConfig& config) {
  if (config.width < 1 || config.height < 1 || !(config.theta_max > 0.0) ||
      !(config.theta_max < std::numbers::pi / 2) || !(config.m.low > 0.0) ||
      config.m.high < config.m.low || !(config.k1_over_focal.low > 0.0) ||
      config.k1_over_focal.high < config.k1_over_focal.low || !(config.focal > 0.0)) {
    throw std::invalid_argument("sample_params: invalid sampler config");
  }
  SplitMix64 rng(seed);
  const double half_diag = 0.5 * std::hypot(config.width, config.height);
  const double cx = 0.5 * (config.width - 1);
  const double cy = 0.5 * (config.height - 1);
  for (int attempt = 0; attempt <= 1000; ++attempt) {
    FisheyeParamsd p;
    p.theta_max = config.theta_max;
    p.k(0) = config.focal * rng.uniform(config.k1_over_focal.low, config.k1_over_focal.high);
    for (int i = 1; i < 5; ++i) {
      const Range& r = config.k_rel[i - 1];
      p.k(i) = rng.uniform(r.low, r.high) * p.k(0) * std::pow(config.theta_max, -(2.0 * i));
    }
    p.mu = p.mv = rng.uniform(config.m.low, config.m.high);
    p.u0 = cx + config.principal_jitter * config.width * rng.uniform(-1.0, 1.0);
    p.v0 = cy + config.principal_jitter * config.height * rng.uniform(-1.0, 1.0);
    if (!check_monotonic(p)) continue;
    const double circle = radial_profile_unchecked(p.theta_max, p) * std::min(p.mu, p.mv);
    if (circle < config.min_coverage * half_diag) continue;
    return p;
  }
  throw SamplerExhausted("sample_params: no admissible parameters after 1000 rejections");
}

ImageBuffer distort_image(const ImageBuffer& src, const FisheyeParamsd& params,
                          const VirtualPinholed& pinhole, int width, int height) {
  if (src.empty()) throw std::invalid_argument("distort_image: empty source");
  const RemapGrid grid = build_inverse_remap(params, pinhole, width, height);
  return rectify_image(src, grid);
}

namespace {

std::optional<Pixel> map_to_fisheye(const Pixel& rect, const FisheyeParamsd& params,
                                    const VirtualPinholed& pinhole) {
  const Angled ray = pinhole_angle(rect, pinhole);
  if (ray.theta > params.theta_max) return std::nullopt;
  return project_ray(ray, params);
}

bool inside(const Pixel& p, int width, int height) {
  return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= width - 1 && p.y() <= height - 1;
}

}  // namespace

DistortedSegments distort_segments(const std::vector<LineSegment>& segments,
                                   const FisheyeParamsd& params, const VirtualPinholed& pinhole,
                                   int width, int height) {
  if (!check_monotonic(params)) {
    throw NonMonotoneError("distort_segments: parameters are not monotone");
  }
  DistortedSegments out;
  for (const auto& seg : segments) {
    const double length = seg.length();
    int n = std::max(2, static_cast<int>(std::ceil(length)));
    std::vector<std::optional<Pixel>> mapped;
    for (int refine = 0; refine < 8; ++refine) {
      mapped.assign(static_cast<size_t>(n), std::nullopt);
      for (int j = 0; j < n; ++j) {
        const double t = static_cast<double>(j) / (n - 1);
        mapped[j] = map_to_fisheye(seg.x + t * (seg.x_prime - seg.x), params, pinhole);
      }
      double max_gap = 0.0;
      for (int j = 1; j < n; ++j) {
        if (mapped[j] && mapped[j - 1]) max_gap = std::max(max_gap, (*mapped[j] - *mapped[j - 1]).norm());
      }
      if (max_gap <= 1.0) break;
      n = static_cast<int>(std::ceil((n - 1) * max_gap / 0.95)) + 1;
    }

    bool emitted = false;
    Polyline current;
    auto flush = [&]() {
      if (current.points.size() >= 2) {
        current.source = seg;
        current.arc_length = 0.0;
        for (size_t i = 1; i < current.points.size(); ++i) {
          current.arc_length += (current.points[i] - current.points[i - 1]).norm();
        }
        out.polylines.push_back(std::move(current));
        emitted = true;
      }
      current = Polyline{};
    };
    for (const auto& m : mapped) {
      if (m && inside(*m, width, height)) {
        current.points.push_back(*m);
      } else {
        flush();
      }
    }
    flush();
    if (!emitted) ++out.dropped;
  }
  return out;
}

double point_segment_distance(const Pixel& p, const Pixel& a, const Pixel& b) {
  const Pixel ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

LineMap render_line_map(const std::vector<std::vector<Pixel>>& chains,
                        const std::vector<double>& values, int width, int height) {
  if (chains.size() != values.size()) {
    throw std::invalid_argument("render_line_map: one value per chain required");
  }
  LineMap map(width, height);
  for (size_t c = 0; c < chains.size(); ++c) {
    const auto& pts = chains[c];
    const double value = values[c];
    // A single-point chain is rendered as a degenerate piece.
    const size_t pieces = pts.size() == 1 ? 1 : pts.size() - 1;
    for (size_t i = 0; i < pieces && !pts.empty(); ++i) {
      const Pixel& a = pts[i];
      const Pixel& b = pts[std::min(i + 1, pts.size() - 1)];
      const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x(), b.x()))) - 1);
      const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(a.x(), b.x()))) + 1);
      const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y(), b.y()))) - 1);
      const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(a.y(), b.y()))) + 1);
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          if (point_segment_distance(Pixel(x, y), a, b) < 0.5) {
            map.data(y, x) = std::max(map.data(y, x), value);
          }
        }
      }
    }
  }
  return map;
}

LineMap render_line_map(const std::vector<LineSegment>& segments, int width, int height) {
  std::vector<std::vector<Pixel>> chains;
  std::vector<double> values;
  for (const auto& s : segments) {
    chains.push_back({s.x, s.x_prime});
    values.push_back(s.length());
  }
  return render_line_map(chains, values, width, height);
}

LineMap render_line_map(const std::vector<Polyline>& polylines, int width, int height) {
  std::vector<std::vector<Pixel>> chains;
  std::vector<double> values;
  for (const auto& pl : polylines) {
    chains.push_back(pl.points);
    values.push_back(pl.source.length());
  }
  return render_line_map(chains, values, width, height);
}

VirtualPinholed source_pinhole(const SourceImage& source, const SamplerConfig& config) {
  return default_pinhole(source.image.width(), source.image.height(), config.theta_max);
}

DatasetSample make_sample(const SourceImage& source, const SamplerConfig& config,
                          std::uint64_t seed) {
  DatasetSample s;
  s.seed = seed;
  s.params = sample_params(seed, config);
  const VirtualPinholed pinhole = source_pinhole(source, config);
  s.fisheye_image = distort_image(source.image, s.params, pinhole, config.width, config.height);
  s.segments = source.segments;
  s.distorted_polylines =
      distort_segments(source.segments, s.params, pinhole, config.width, config.height).polylines;
  s.line_map_distorted = render_line_map(s.distorted_polylines, config.width, config.height);
  s.line_map_rectified = render_line_map(source.segments, pinhole.width, pinhole.height);
  return s;
}

namespace {

struct Quad {
  std::array<Pixel, 4> v;
  std::array<double, 3> color;
  Pixel gradient;
};

bool inside_convex(const Quad& q, double x, double y) {
  double sign = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Pixel& a = q.v[i];
    const Pixel& b = q.v[(i + 1) % 4];
    const double cross = (b.x() - a.x()) * (y - a.y()) - (b.y() - a.y()) * (x - a.x());
    if (cross == 0.0) continue;
    if (sign == 0.0) {
      sign = cross;
    } else if ((cross > 0.0) != (sign > 0.0)) {
      return false;
    }
  }
  return true;
}

Plane<double> gaussian_blur(const Plane<double>& in, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (auto& k : kernel) k /= sum;
  const int h = static_cast<int>(in.rows());
  const int w = static_cast<int>(in.cols());
  Plane<double> tmp(h, w);
  Plane<double> out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * in(y, std::clamp(x + i, 0, w - 1));
      tmp(y, x) = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp(std::clamp(y + i, 0, h - 1), x);
      out(y, x) = acc;
    }
  }
  return out;
}

}  // namespace

SourceImage make_synthetic_scene(std::uint64_t seed, int width, int height, int min_segments) {
  SplitMix64 rng(seed);
  SourceImage scene;
  scene.name = "synthetic-" + std::to_string(seed);

  const double margin = 4.0;
  const double span = std::min(width, height);
  std::vector<Quad> quads;
  const int quad_count = std::max(4, (min_segments + 3) / 4);
  for (int q = 0; q < quad_count; ++q) {
    // A rotated, sheared rectangle kept inside the raster.
    Quad quad;
    for (int attempt = 0; attempt < 100; ++attempt) {
      const Pixel c(rng.uniform(0.2, 0.8) * (width - 1), rng.uniform(0.2, 0.8) * (height - 1));
      const double a = rng.uniform(0.15, 0.45) * span;
      const double b = rng.uniform(0.1, 0.35) * span;
      const double angle = rng.uniform(0.0, std::numbers::pi);
      const double shear = rng.uniform(-0.3, 0.3);
      const Pixel e1(std::cos(angle), std::sin(angle));
      const Pixel e2 = Pixel(-e1.y(), e1.x()) + shear * e1;
      quad.v = {c - a * e1 - b * e2, c + a * e1 - b * e2, c + a * e1 + b * e2, c - a * e1 + b * e2};
      const bool fits = std::all_of(quad.v.begin(), quad.v.end(), [&](const Pixel& p) {
        return p.x() >= margin && p.y() >= margin && p.x() <= width - 1 - margin &&
               p.y() <= height - 1 - margin;
      });
      if (fits) break;
      quad.v = {c, c, c, c};
    }
    if ((quad.v[0] - quad.v[1]).norm() == 0.0) continue;
    for (auto& ch : quad.color) ch = rng.uniform(0.1, 0.9);
    quad.gradient = Pixel(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)) * (0.2 / span);
    quads.push_back(quad);
  }

  std::array<double, 3> top{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7)};
  std::array<double, 3> bottom{rng.uniform(0.2, 0.6), rng.uniform(0.2, 0.6), rng.uniform(0.2, 0.6)};

  constexpr int kSuper = 4;
  ImageBuffer img(width, height, 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      std::array<double, 3> acc{0.0, 0.0, 0.0};
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = x + (sx + 0.5) / kSuper - 0.5;
          const double py = y + (sy + 0.5) / kSuper - 0.5;
          const double t = std::clamp(py / std::max(1, height - 1), 0.0, 1.0);
          std::array<double, 3> col{};
          for (int c = 0; c < 3; ++c) col[c] = (1 - t) * top[c] + t * bottom[c];
          for (const auto& q : quads) {
            if (!inside_convex(q, px, py)) continue;
            const double shade = q.gradient.dot(Pixel(px, py) - q.v[0]);
            for (int c = 0; c < 3; ++c) col[c] = std::clamp(q.color[c] + shade, 0.0, 1.0);
          }
          for (int c = 0; c < 3; ++c) acc[c] += col[c];
        }
      }
      for (int c = 0; c < 3; ++c) img.channels[c](y, x) = acc[c] / (kSuper * kSuper);
    }
  }
  for (auto& c : img.channels) c = gaussian_blur(c, 1.0);
  scene.image = std::move(img);

  for (const auto& q : quads) {
    for (int i = 0; i < 4; ++i) scene.segments.push_back({q.v[i], q.v[(i + 1) % 4]});
  }
  return scene;
}

}  // namespace fisheye
