#pragma once

#include "fisheye/camera_model.hpp"
#include "fisheye/image.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace fisheye {

/// Straight segment in rectified (perspective) pixels.
struct LineSegment {
  Pixel x = Pixel::Zero();
  Pixel x_prime = Pixel::Zero();

  double length() const { return (x_prime - x).norm(); }
};

/// Distorted image of a segment, sampled densely in fisheye pixels.
struct Polyline {
  std::vector<Pixel> points;
  LineSegment source;
  double arc_length = 0.0;
};

struct Range {
  double low = 0.0;
  double high = 0.0;
};

/// Parameter sampling ranges. k2..k5 are given as fractions of k1 theta_max
/// at theta_max, i.e. k_i = s * k1 * theta_max^-(2i-2) with s in k_rel[i].
struct SamplerConfig {
  Range k1_over_focal{0.8, 1.2};
  std::array<Range, 4> k_rel{Range{-0.15, 0.15}, Range{-0.15, 0.15}, Range{-0.15, 0.15},
                             Range{-0.15, 0.15}};
  Range m{80.0, 140.0};
  double principal_jitter = 0.05;  // fraction of the image size
  double focal = 1.0;              // source focal, image units
  double theta_max = kDefaultThetaMax;
  double min_coverage = 0.6;  // image circle / half-diagonal
  int variants = 4;
  int width = 320;
  int height = 320;
};

class SamplerExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic 64-bit stream (splitmix64) with explicit uniform mapping, so
/// draws are identical across standard libraries.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  /// Uniform double in [0, 1).
  double uniform();
  double uniform(double low, double high) { return low + (high - low) * uniform(); }
  double normal();

 private:
  std::uint64_t state_;
};

/// Seed of the independent stream for sample `index` under `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// Uniform draw from the configured ranges, rejection-resampled until the
/// profile is monotone and the image circle covers min_coverage of the
/// half-diagonal. Throws SamplerExhausted after 1000 rejections.
FisheyeParamsd sample_params(std::uint64_t seed, const SamplerConfig& config);

/// Resamples a perspective image (viewed through `pinhole`) into a fisheye
/// image of size width x height. Pixels that view outside src are black and
/// invalid.
ImageBuffer distort_image(const ImageBuffer& src, const FisheyeParamsd& params,
                          const VirtualPinholed& pinhole, int width, int height);

struct DistortedSegments {
  std::vector<Polyline> polylines;
  int dropped = 0;
};

/// Maps each segment through forward_map at >= 1 sample per source pixel
/// (refined until consecutive fisheye samples are <= 1 px apart) and clips to
/// the fisheye raster. A clipped segment may yield several runs.
DistortedSegments distort_segments(const std::vector<LineSegment>& segments,
                                   const FisheyeParamsd& params, const VirtualPinholed& pinhole,
                                   int width, int height);

/// Rasterizes segments: pixels whose center is < 0.5 px from a segment hold
/// its length (max on overlap), all others 0.
LineMap render_line_map(const std::vector<LineSegment>& segments, int width, int height);

/// Same rule for polylines; every covered pixel takes the polyline's source
/// segment length.
LineMap render_line_map(const std::vector<Polyline>& polylines, int width, int height);

/// Lower-level form: each primitive is a chain of points with one value.
LineMap render_line_map(const std::vector<std::vector<Pixel>>& chains,
                        const std::vector<double>& values, int width, int height);

double point_segment_distance(const Pixel& p, const Pixel& a, const Pixel& b);

struct DatasetSample {
  ImageBuffer fisheye_image;
  FisheyeParamsd params;
  std::vector<LineSegment> segments;
  std::vector<Polyline> distorted_polylines;
  LineMap line_map_rectified;
  LineMap line_map_distorted;
  std::uint64_t seed = 0;
};

/// One source: a perspective image and its straight-segment annotation.
struct SourceImage {
  ImageBuffer image;
  std::vector<LineSegment> segments;
  std::string name;
};

/// Synthesizes one sample from a source with parameters drawn from `seed`.
DatasetSample make_sample(const SourceImage& source, const SamplerConfig& config,
                          std::uint64_t seed);

/// Pinhole used for a source raster of the given size.
VirtualPinholed source_pinhole(const SourceImage& source, const SamplerConfig& config);

/// Procedural indoor-like perspective scene: shaded quads with blurred edges,
/// annotated with the quad edges. Used when no real sources are supplied.
SourceImage make_synthetic_scene(std::uint64_t seed, int width, int height, int min_segments = 12);

struct DatasetConfig {
  SamplerConfig sampler;
  std::uint64_t seed = 20190101;
  std::string split = "train";
};

struct Manifest {
  std::filesystem::path path;
  std::vector<std::filesystem::path> records;
};

/// Writes <out>/samples/NNNNNN.{png,json,...} and <out>/manifest.json.
Manifest build_dataset(const std::vector<SourceImage>& sources, const DatasetConfig& config,
                       const std::filesystem::path& out_dir);

}  // namespace fisheye
