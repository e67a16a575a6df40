#pragma once

#include "fisheye/camera_model.hpp"
#include "fisheye/image.hpp"

#include <Eigen/Core>

#include <array>
#include <functional>
#include <span>

namespace fisheye {

using Vector5d = Eigen::Matrix<double, 5, 1>;
using Vector9d = Eigen::Matrix<double, 9, 1>;

/// Per-component rescaling weights and term weights of the training
/// objective. Defaults are the published training settings.
struct LossWeights {
  Vector9d w = (Vector9d() << 0.1, 0.1, 0.5, 1.0, 1.0, 0.1, 0.1, 0.1, 0.1).finished();
  double lambda_g = 1.0;
  double lambda_loc = 1.0;
  double lambda_c = 50.0;
};

/// Global 9-vector head plus five local 5-vector heads (center and the four
/// corners).
struct ParamHeads {
  Vector9d global = Vector9d::Zero();
  std::array<Vector5d, 5> local{Vector5d::Zero(), Vector5d::Zero(), Vector5d::Zero(),
                                Vector5d::Zero(), Vector5d::Zero()};

  /// Every head set to the same parameters.
  static ParamHeads consensus(const FisheyeParamsd& params);
};

struct LineMapLoss {
  double value = 0.0;
  /// True when the target has no positive pixel, which nullifies both terms.
  bool degenerate = false;
};

/// Class-balanced squared error between a predicted map h and the target
/// h_hat: (|O-|/|O|) sum_{O+} D + (|O+|/|O|) sum_{O-} D, O+ = {h_hat > 0}.
LineMapLoss line_map_loss(const LineMap& h, const LineMap& h_hat);

/// d line_map_loss / d h, per pixel.
Plane<double> line_map_loss_gradient(const LineMap& h, const LineMap& h_hat);

/// (1/9) sum w_i (K_g(i) - K_gt(i))^2
double global_param_loss(const Vector9d& k_global, const Vector9d& k_truth, const Vector9d& w);
Vector9d global_param_loss_gradient(const Vector9d& k_global, const Vector9d& k_truth,
                                    const Vector9d& w);

/// (1/5) sum_{i<=5} w_i (K_loc(i) - K_gt(i))^2 over the first five components.
double local_param_loss(const Vector5d& k_local, const Vector5d& k_truth, const Vector5d& w);
Vector5d local_param_loss_gradient(const Vector5d& k_local, const Vector5d& k_truth,
                                   const Vector5d& w);

/// Penalty distance (px) for points that leave the valid disk.
inline constexpr double kDomainPenalty = 5.0;

/// (1/N) sum_{p in omega_plus} |F(p, K_d) - F(p, K_gt)|^2 where F rectifies a
/// fisheye pixel into the pinhole frame. A point out of range under either
/// parameter set contributes kDomainPenalty^2.
double curvature_loss(const FisheyeParamsd& k_d, const FisheyeParamsd& k_gt,
                      std::span<const Pixel> omega_plus, const VirtualPinholed& pinhole);

/// Analytic gradient of curvature_loss with respect to K_d, ordered as
/// FisheyeParams::vector(). Penalized points contribute nothing.
Vector9d curvature_loss_gradient(const FisheyeParamsd& k_d, const FisheyeParamsd& k_gt,
                                 std::span<const Pixel> omega_plus, const VirtualPinholed& pinhole);

/// Mean of the global and local heads for k1..k5; mu, mv, u0, v0 from the
/// global head.
FisheyeParamsd combine_params(const ParamHeads& heads, double theta_max = kDefaultThetaMax);

struct LossBreakdown {
  double total = 0.0;
  double global = 0.0;
  double local = 0.0;  // summed over the five regions
  double curvature = 0.0;
};

LossBreakdown total_loss(const ParamHeads& heads, const FisheyeParamsd& k_gt,
                         std::span<const Pixel> omega_plus, const VirtualPinholed& pinhole,
                         const LossWeights& weights = {});

/// Central differences with step h on every coordinate.
Eigen::VectorXd finite_diff_grad(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double step);

/// Pixels with h_hat > 0, as fisheye pixel coordinates.
std::vector<Pixel> positive_pixels(const LineMap& map);

}  // namespace fisheye
