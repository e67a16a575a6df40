#pragma once

#include "fisheye/camera_model.hpp"
#include "fisheye/dataset_synth.hpp"
#include "fisheye/image.hpp"

#include <Eigen/Core>

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fisheye {

class DegenerateProblem : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Total-least-squares line n . p = c with |n| = 1.
struct TlsLine {
  Eigen::Vector2d normal = Eigen::Vector2d::UnitY();
  double offset = 0.0;
  /// Signed perpendicular distances n . p_i - c; they sum to zero.
  std::vector<double> residuals;
};

/// The direction is oriented along (last - first) and the normal is its
/// +90 degree rotation, so the sign convention varies continuously with the
/// input. Throws DegenerateProblem when all points coincide.
TlsLine fit_line_tls(std::span<const Pixel> points);

struct LmOptions {
  int max_iterations = 2000;  // total over all stages, probes and the final polish
  double lambda_init = 1e-3;
  double lambda_accept = 0.3;
  double lambda_reject = 3.0;
  double lambda_min = 1e-12;
  double lambda_max = 1e6;
  double relative_cost_tol = 1e-10;
  double gradient_tol = 1e-8;
  int patience = 3;
  double fd_step = 1e-6;
  double domain_penalty = 5.0;  // px, per point leaving the valid disk
  // Restarts along the focal direction: s = span^(i / probes), i = -probes..probes.
  int focal_probes = 6;
  double focal_probe_span = 1.6;
  int probe_iterations = 20;
};

struct CalibProblem {
  std::vector<Polyline> observations;
  int width = 320;
  int height = 320;
  double gauge_mu = 100.0;
  double gauge_mv = 100.0;
  FisheyeParamsd initial;
  VirtualPinholed pinhole;
  LmOptions options;
};

struct CalibResult {
  FisheyeParamsd params;
  double rms_residual = 0.0;
  std::vector<double> line_rms;
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

/// Equidistant start: principal point at the raster center, mu = mv = gauge,
/// k1 = (half-diagonal / gauge) / theta_fov_guess, k2..k5 = 0.
FisheyeParamsd init_params(int width, int height, double theta_fov_guess, double gauge = 1.0,
                           double theta_max = kDefaultThetaMax);

/// Per-point straightness residuals (px in the rectified frame): each
/// polyline is rectified and scored against its own TLS line. Points outside
/// the valid disk contribute options.domain_penalty. Assumes monotone params.
Eigen::VectorXd straightness_residuals(const FisheyeParamsd& params, const CalibProblem& problem);

/// Levenberg-Marquardt over (k1..k5, u0, v0) with mu, mv held at the gauge.
/// Throws DegenerateProblem for fewer than 3 usable polylines.
CalibResult estimate_params(const CalibProblem& problem);

/// Throws DegenerateProblem unless the problem has >= 3 polylines with >= 3
/// points each; returns advisory warnings otherwise.
std::vector<std::string> validate_problem(const CalibProblem& problem);

struct RpeResult {
  double mse = 0.0;  // px^2
  double rms = 0.0;  // px
  size_t count = 0;
};

/// Mean squared distance between the rectifications of `domain` under the
/// two parameter sets. Every domain point must be in range for both.
RpeResult evaluate_rpe(const FisheyeParamsd& estimated, const FisheyeParamsd& truth,
                       std::span<const Pixel> domain, const VirtualPinholed& pinhole);

/// All pixels of a width x height raster (optionally restricted to `mask`)
/// that lie inside the valid disk of both parameter sets.
std::vector<Pixel> rpe_domain(const FisheyeParamsd& a, const FisheyeParamsd& b, int width,
                              int height, const Mask* mask = nullptr);

}  // namespace fisheye
