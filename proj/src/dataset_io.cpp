#include "fisheye/dataset_synth.hpp"
#include "fisheye/io.hpp"

#include <array>
#include <cstdio>

namespace fisheye {

namespace fs = std::filesystem;
using io::json;

namespace {

/// Bilinear resize of a source to the output raster; segments are scaled
/// with the same pixel-center convention.
SourceImage fit_source(const SourceImage& src, int width, int height) {
  if (src.image.width() == width && src.image.height() == height) return src;
  const double sx = width > 1 ? double(src.image.width() - 1) / (width - 1) : 0.0;
  const double sy = height > 1 ? double(src.image.height() - 1) / (height - 1) : 0.0;
  RemapGrid grid;
  grid.u.resize(height, width);
  grid.v.resize(height, width);
  grid.valid = Mask::Constant(height, width, true);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      grid.u(y, x) = x * sx;
      grid.v(y, x) = y * sy;
    }
  }
  SourceImage out;
  out.name = src.name;
  out.image = rectify_image(src.image, grid);
  for (const auto& s : src.segments) {
    LineSegment t{Pixel(s.x.x() / sx, s.x.y() / sy), Pixel(s.x_prime.x() / sx, s.x_prime.y() / sy)};
    if (t.length() > 0.0) out.segments.push_back(t);
  }
  return out;
}

json sampler_to_json(const SamplerConfig& c) {
  json j;
  j["k1_over_focal"] = {c.k1_over_focal.low, c.k1_over_focal.high};
  j["k_rel"] = json::array();
  for (const auto& r : c.k_rel) j["k_rel"].push_back({r.low, r.high});
  j["m"] = {c.m.low, c.m.high};
  j["principal_jitter"] = c.principal_jitter;
  j["focal"] = c.focal;
  j["theta_max"] = c.theta_max;
  j["min_coverage"] = c.min_coverage;
  j["variants"] = c.variants;
  j["width"] = c.width;
  j["height"] = c.height;
  return j;
}

std::string sample_stem(size_t index) {
  std::array<char, 16> buf{};
  std::snprintf(buf.data(), buf.size(), "%06zu", index);
  return buf.data();
}

}  // namespace

Manifest build_dataset(const std::vector<SourceImage>& sources, const DatasetConfig& config,
                       const fs::path& out_dir) {
  const SamplerConfig& sc = config.sampler;
  if (sc.variants < 1) throw std::invalid_argument("build_dataset: variants must be >= 1");
  const fs::path sample_dir = out_dir / "samples";
  std::error_code ec;
  fs::create_directories(sample_dir, ec);
  if (ec) throw io::IoError("cannot create " + sample_dir.string() + ": " + ec.message());

  Manifest manifest;
  manifest.path = out_dir / "manifest.json";
  json samples = json::array();
  size_t index = 0;
  for (const auto& raw : sources) {
    const SourceImage source = fit_source(raw, sc.width, sc.height);
    for (int variant = 0; variant < sc.variants; ++variant, ++index) {
      const std::uint64_t seed = derive_seed(config.seed, index);
      const DatasetSample s = make_sample(source, sc, seed);
      const std::string stem = sample_stem(index);

      io::write_png(sample_dir / (stem + ".png"), s.fisheye_image);
      io::write_mask_png(sample_dir / (stem + "_mask.png"), s.fisheye_image.valid);
      io::write_png(sample_dir / (stem + "_source.png"), source.image);
      io::write_line_map(sample_dir / (stem + "_distorted.lmap"), s.line_map_distorted);
      io::write_line_map(sample_dir / (stem + "_rectified.lmap"), s.line_map_rectified);

      json record;
      record["image"] = stem + ".png";
      record["mask"] = stem + "_mask.png";
      record["source_image"] = stem + "_source.png";
      record["line_map_distorted"] = stem + "_distorted.lmap";
      record["line_map_rectified"] = stem + "_rectified.lmap";
      record["params"] = io::params_to_json(s.params);
      record["segments"] = io::segments_to_json(s.segments);
      record["polylines"] = io::polylines_to_json(s.distorted_polylines);
      record["polyline_sources"] = json::array();
      for (const auto& pl : s.distorted_polylines) {
        record["polyline_sources"].push_back(
            {pl.source.x.x(), pl.source.x.y(), pl.source.x_prime.x(), pl.source.x_prime.y()});
      }
      record["seed"] = seed;
      record["source"] = source.name;
      record["width"] = sc.width;
      record["height"] = sc.height;
      record["pinhole_f"] = source_pinhole(source, sc).f;

      const fs::path record_path = sample_dir / (stem + ".json");
      io::write_json(record_path, record);
      manifest.records.push_back(record_path);
      samples.push_back("samples/" + stem + ".json");
    }
  }

  json m;
  json cfg = sampler_to_json(sc);
  cfg["seed"] = config.seed;
  m["config"] = cfg;
  m["samples"] = samples;
  m["split"] = config.split;
  io::write_json(manifest.path, m);
  return manifest;
}

}  // namespace fisheye
