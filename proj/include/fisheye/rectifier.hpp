#pragma once

#include "fisheye/camera_model.hpp"
#include "fisheye/image.hpp"

#include <optional>
#include <vector>

namespace fisheye {

/// Per-output-pixel source coordinates into a fisheye raster.
struct RemapGrid {
  Plane<double> u;
  Plane<double> v;
  Mask valid;

  int width() const { return static_cast<int>(valid.cols()); }
  int height() const { return static_cast<int>(valid.rows()); }

  /// Grid whose entry (x, y) points at (x, y).
  static RemapGrid identity(int width, int height);
};

/// Pinhole whose raster matches the fisheye raster and whose half-extent
/// spans 90% of theta_max.
VirtualPinholed default_pinhole(int width, int height, double theta_max = kDefaultThetaMax);

/// grid(x, y) = forward_map((x, y)); entries beyond theta_max or outside the
/// source_width x source_height fisheye raster are invalid.
RemapGrid build_remap(const FisheyeParamsd& params, const VirtualPinholed& pinhole,
                      int source_width, int source_height);

/// Same as above with the source raster equal to the pinhole raster.
RemapGrid build_remap(const FisheyeParamsd& params, const VirtualPinholed& pinhole);

/// Bilinear resampling through a grid. An output pixel is valid iff the grid
/// entry is valid and all four source neighbours are valid.
ImageBuffer rectify_image(const ImageBuffer& img, const RemapGrid& grid);

/// Inverse of forward_map per point. Points outside the valid radial range
/// yield nullopt without affecting the others.
std::vector<std::optional<Pixel>> rectify_points(const std::vector<Pixel>& points,
                                                 const FisheyeParamsd& params,
                                                 const VirtualPinholed& pinhole);

LineMap rectify_line_map(const LineMap& map, const RemapGrid& grid);

LineMap rectify_line_map(const LineMap& map, const FisheyeParamsd& params,
                         const VirtualPinholed& pinhole);

/// Inverse remap: for each fisheye pixel, the rectified location it views.
/// Entries whose angle exceeds theta_max or that land outside the pinhole
/// raster are invalid. Used to distort perspective rasters.
RemapGrid build_inverse_remap(const FisheyeParamsd& params, const VirtualPinholed& pinhole,
                              int fisheye_width, int fisheye_height);

}  // namespace fisheye
