#pragma once

#include "fisheye/camera_model.hpp"
#include "fisheye/dataset_synth.hpp"
#include "fisheye/image.hpp"
#include "fisheye/rectifier.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace fisheye::io {

using nlohmann::json;

/// File-level failure; the message always carries the offending path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed but readable input (bad JSON shape, wrong magic, ...).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Serializes with every floating-point number printed as %.17g, so output
/// is bit-stable and round-trips exactly. Object keys keep json's sorted order.
std::string dump(const json& value, int indent = 2);

json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& value);

/// {"k":[k1..k5],"mu":..,"mv":..,"u0":..,"v0":..,"theta_max":..}
json params_to_json(const FisheyeParamsd& params);
FisheyeParamsd params_from_json(const json& j);

json segments_to_json(const std::vector<LineSegment>& segments);
std::vector<LineSegment> segments_from_json(const json& j);

json polylines_to_json(const std::vector<Polyline>& polylines);
/// Accepts [[[u,v],..],..]; sources are unknown and left zero.
std::vector<std::vector<Pixel>> polyline_points_from_json(const json& j);

/// {"filename":.., "lines":[[x1,y1,x2,y2],..]}; the image path is resolved
/// relative to the annotation file.
struct Annotation {
  std::filesystem::path image_path;
  std::vector<LineSegment> segments;
};
Annotation read_annotation(const std::filesystem::path& path);

/// 8-bit PNG IO. Gray, gray+alpha, RGB and RGBA inputs are accepted; alpha is
/// dropped and values are normalized to [0, 1].
ImageBuffer read_png(const std::filesystem::path& path);
/// Writes 8-bit gray or RGB depending on the channel count.
void write_png(const std::filesystem::path& path, const ImageBuffer& image);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);
Mask read_mask_png(const std::filesystem::path& path);

/// LMAP raster: "LMAP", u32 H, u32 W, u32 endianness tag (0x01020304), then
/// little-endian float32 planes in row-major order.
void write_line_map(const std::filesystem::path& path, const LineMap& map);
LineMap read_line_map(const std::filesystem::path& path);

/// A dataset sample as written by build_dataset, with paths resolved.
struct SampleRecord {
  std::filesystem::path path;
  ImageBuffer fisheye_image;  // valid mask loaded from the mask PNG when present
  FisheyeParamsd params;
  std::vector<LineSegment> segments;
  std::vector<Polyline> polylines;
  LineMap line_map_distorted;
  LineMap line_map_rectified;
  VirtualPinholed pinhole;
  std::uint64_t seed = 0;
};

/// Loads a sample record JSON and every raster it references.
SampleRecord read_sample_record(const std::filesystem::path& path);

/// Polylines from either a sample record or a {"polylines": [...]} file.
std::vector<Polyline> read_observations(const std::filesystem::path& path);

/// Same header, then u and v planes, then a validity bitplane (LSB first).
void write_remap_grid(const std::filesystem::path& path, const RemapGrid& grid);
RemapGrid read_remap_grid(const std::filesystem::path& path);

}  // namespace fisheye::io
