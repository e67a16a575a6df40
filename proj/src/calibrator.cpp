#include "fisheye/calibrator.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <numbers>

namespace fisheye {

TlsLine fit_line_tls(std::span<const Pixel> points) {
  if (points.size() < 2) throw DegenerateProblem("fit_line_tls: need at least 2 points");
  Pixel mean = Pixel::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (const auto& p : points) {
    const Pixel d = p - mean;
    sxx += d.x() * d.x();
    syy += d.y() * d.y();
    sxy += d.x() * d.y();
  }
  if (sxx == 0.0 && syy == 0.0) throw DegenerateProblem("fit_line_tls: all points coincide");

  // Major axis of the scatter matrix in closed form.
  const double alpha = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  Eigen::Vector2d dir(std::cos(alpha), std::sin(alpha));
  if (dir.dot(points.back() - points.front()) < 0.0) dir = -dir;

  TlsLine line;
  line.normal = Eigen::Vector2d(-dir.y(), dir.x());
  line.offset = line.normal.dot(mean);
  line.residuals.reserve(points.size());
  for (const auto& p : points) line.residuals.push_back(line.normal.dot(p - mean));
  return line;
}

FisheyeParamsd init_params(int width, int height, double theta_fov_guess, double gauge,
                           double theta_max) {
  if (width < 1 || height < 1 || !(theta_fov_guess > 0.0) || !(gauge > 0.0)) {
    throw std::invalid_argument("init_params: size, angle and gauge must be positive");
  }
  FisheyeParamsd p;
  p.k.setZero();
  p.k(0) = 0.5 * std::hypot(width, height) / gauge / theta_fov_guess;
  p.mu = p.mv = gauge;
  p.u0 = 0.5 * (width - 1);
  p.v0 = 0.5 * (height - 1);
  p.theta_max = theta_max;
  return p;
}

namespace {

void line_residuals(const FisheyeParamsd& params, const CalibProblem& problem,
                    const Polyline& line, double rho_max, Eigen::Ref<Eigen::VectorXd> out) {
  const double penalty = problem.options.domain_penalty;
  std::vector<Pixel> rectified;
  std::vector<int> slots;
  rectified.reserve(line.points.size());
  for (size_t i = 0; i < line.points.size(); ++i) {
    const Pixel& p = line.points[i];
    if (image_radius(p, params) > rho_max) {
      out(static_cast<Eigen::Index>(i)) = penalty;
      continue;
    }
    rectified.push_back(rectify_point_unchecked(p, params, problem.pinhole));
    slots.push_back(static_cast<int>(i));
    out(static_cast<Eigen::Index>(i)) = 0.0;
  }
  // Two points are always collinear.
  if (rectified.size() <= 2) return;
  try {
    const TlsLine fit = fit_line_tls(rectified);
    for (size_t j = 0; j < slots.size(); ++j) out(slots[j]) = fit.residuals[j];
  } catch (const DegenerateProblem&) {
    // Coincident rectified points: leave zeros.
  }
}

Eigen::Matrix<double, 7, 1> pack(const FisheyeParamsd& p) {
  Eigen::Matrix<double, 7, 1> x;
  x << p.k, p.u0, p.v0;
  return x;
}

FisheyeParamsd unpack(const Eigen::Matrix<double, 7, 1>& x, const FisheyeParamsd& base) {
  FisheyeParamsd p = base;
  p.k = x.head<5>();
  p.u0 = x(5);
  p.v0 = x(6);
  return p;
}

int distinct_directions(const std::vector<Polyline>& lines) {
  // Chord directions bucketed into 10 degree bins.
  std::vector<bool> seen(18, false);
  for (const auto& l : lines) {
    if (l.points.size() < 2) continue;
    const Pixel d = l.points.back() - l.points.front();
    if (d.norm() == 0.0) continue;
    double a = std::atan2(d.y(), d.x());
    if (a < 0.0) a += std::numbers::pi;
    seen[std::min(17, static_cast<int>(a / (std::numbers::pi / 18)))] = true;
  }
  return static_cast<int>(std::count(seen.begin(), seen.end(), true));
}

}  // namespace

Eigen::VectorXd straightness_residuals(const FisheyeParamsd& params, const CalibProblem& problem) {
  Eigen::Index total = 0;
  for (const auto& l : problem.observations) total += static_cast<Eigen::Index>(l.points.size());
  Eigen::VectorXd r(total);
  const double rho_max = radial_profile_unchecked(params.theta_max, params);
  Eigen::Index offset = 0;
  for (const auto& l : problem.observations) {
    const auto n = static_cast<Eigen::Index>(l.points.size());
    line_residuals(params, problem, l, rho_max, r.segment(offset, n));
    offset += n;
  }
  return r;
}

namespace {

// RMS distance of the rectified observations from the pinhole center.
double observation_spread(const FisheyeParamsd& params, const CalibProblem& problem) {
  const double rho_max = radial_profile_unchecked(params.theta_max, params);
  const Pixel center = problem.pinhole.center();
  double sum = 0.0;
  size_t n = 0;
  for (const auto& l : problem.observations) {
    for (const auto& p : l.points) {
      if (image_radius(p, params) > rho_max) continue;
      sum += (rectify_point_unchecked(p, params, problem.pinhole) - center).squaredNorm();
      ++n;
    }
  }
  return n > 0 ? std::sqrt(sum / static_cast<double>(n)) : 0.0;
}

}  // namespace

std::vector<std::string> validate_problem(const CalibProblem& problem) {
  if (!(problem.gauge_mu > 0.0) || !(problem.gauge_mv > 0.0)) {
    throw DegenerateProblem("calibration gauge must be positive");
  }
  const auto usable = std::count_if(problem.observations.begin(), problem.observations.end(),
                                    [](const Polyline& l) { return l.points.size() >= 3; });
  if (usable < 3) {
    throw DegenerateProblem("calibration needs at least 3 polylines with 3 or more points, got " +
                            std::to_string(usable));
  }
  std::vector<std::string> warnings;
  if (distinct_directions(problem.observations) < 3) {
    warnings.emplace_back("fewer than 3 distinct line directions; the estimate may be poorly constrained");
  }
  return warnings;
}

namespace {

using Vec7 = Eigen::Matrix<double, 7, 1>;

struct LmRun {
  Vec7 x;
  int iterations = 0;
  bool converged = false;
};

// Levenberg-Marquardt over the coordinates of x flagged in `active`.
template <typename Objective>
LmRun run_lm(const Objective& objective, const FisheyeParamsd& base, Vec7 x,
             const std::vector<int>& active, const LmOptions& opt, int max_iterations) {
  LmRun out;
  const auto na = static_cast<Eigen::Index>(active.size());
  Eigen::VectorXd r = objective(unpack(x, base));
  double cost = 0.5 * r.squaredNorm();
  double lambda = opt.lambda_init;
  int small_decrease_streak = 0;
  const Eigen::Index n_res = r.size();

  for (int iter = 0; iter < max_iterations; ++iter) {
    out.iterations = iter + 1;
    Eigen::MatrixXd jac(n_res, na);
    for (Eigen::Index j = 0; j < na; ++j) {
      const int i = active[j];
      const double h = opt.fd_step * std::max(1.0, std::abs(x(i)));
      Vec7 xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      jac.col(j) = (objective(unpack(xp, base)) - objective(unpack(xm, base))) / (2.0 * h);
    }
    const Eigen::VectorXd grad = jac.transpose() * r;
    if (cost == 0.0 || grad.lpNorm<Eigen::Infinity>() < opt.gradient_tol) {
      out.converged = true;
      break;
    }

    Eigen::VectorXd scale = jac.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < na; ++j) {
      if (!(scale(j) > 0.0)) scale(j) = 1.0;
    }
    const Eigen::MatrixXd js = jac * scale.cwiseInverse().asDiagonal();

    bool accepted = false;
    double new_cost = cost;
    Vec7 x_new = x;
    Eigen::VectorXd r_new;
    while (true) {
      Eigen::MatrixXd aug(n_res + na, na);
      aug.topRows(n_res) = js;
      aug.bottomRows(na) = std::sqrt(lambda) * Eigen::MatrixXd::Identity(na, na);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_res + na);
      rhs.head(n_res) = -r;
      const Eigen::VectorXd step = scale.cwiseInverse().asDiagonal() * aug.householderQr().solve(rhs);
      x_new = x;
      for (Eigen::Index j = 0; j < na; ++j) x_new(active[j]) += step(j);
      const FisheyeParamsd trial = unpack(x_new, base);
      if (step.allFinite() && check_monotonic(trial)) {
        r_new = objective(trial);
        new_cost = 0.5 * r_new.squaredNorm();
        if (new_cost < cost) {
          accepted = true;
          lambda = std::max(opt.lambda_min, lambda * opt.lambda_accept);
          break;
        }
      }
      if (lambda >= opt.lambda_max) break;
      lambda = std::min(opt.lambda_max, lambda * opt.lambda_reject);
    }

    if (!accepted) {
      // No admissible descent step even at the largest damping.
      out.converged = true;
      break;
    }
    const double rel = (cost - new_cost) / cost;
    x = x_new;
    r = std::move(r_new);
    cost = new_cost;
    small_decrease_streak = rel < opt.relative_cost_tol ? small_decrease_streak + 1 : 0;
    if (small_decrease_streak >= opt.patience) {
      out.converged = true;
      break;
    }
  }
  out.x = x;
  return out;
}

// Moves p along the focal direction of the straightness valley: tan(theta)
// is scaled by s, so straight rectified lines stay straight. The new profile
// is a least-squares fit over the angles the observations occupy.
std::optional<FisheyeParamsd> rescale_focal(const FisheyeParamsd& p, double s, double theta_obs) {
  const double hi = std::atan(s * std::tan(theta_obs));
  if (!(hi > 0.0) || hi >= p.theta_max) return std::nullopt;
  constexpr int kSamples = 64;
  Eigen::Matrix<double, kSamples, 5> a;
  Eigen::Matrix<double, kSamples, 1> b;
  for (int i = 0; i < kSamples; ++i) {
    const double t = hi * (i + 1) / kSamples;
    const double t2 = t * t;
    double tp = t;
    for (int j = 0; j < 5; ++j, tp *= t2) a(i, j) = tp;
    b(i) = radial_profile_unchecked(std::atan(std::tan(t) / s), p);
  }
  FisheyeParamsd out = p;
  out.k = a.colPivHouseholderQr().solve(b);
  if (!out.k.allFinite() || !check_monotonic(out)) return std::nullopt;
  return out;
}

double max_observed_angle(const FisheyeParamsd& p, const CalibProblem& problem) {
  const double rho_max = radial_profile_unchecked(p.theta_max, p);
  double rho = 0.0;
  for (const auto& l : problem.observations) {
    for (const auto& q : l.points) rho = std::max(rho, image_radius(q, p));
  }
  return radial_inverse_unchecked(std::min(rho, rho_max), p);
}

template <typename Objective>
void refine(const Objective& objective, const FisheyeParamsd& base, const CalibProblem& problem,
            const LmOptions& opt, Vec7& x, CalibResult& result) {
  // Free k1 first, then k2, the principal point and the remaining terms one
  // at a time. Jumping straight to all seven coordinates tends to stall
  // against the monotonicity boundary.
  std::vector<int> active = {0};
  const std::vector<std::vector<int>> order = {{1}, {5, 6}, {2}, {3}, {4}};
  int budget = opt.max_iterations - result.iterations;
  for (size_t stage = 0; stage <= order.size(); ++stage) {
    const LmRun run = run_lm(objective, base, x, active, opt, budget);
    x = run.x;
    result.iterations += run.iterations;
    budget -= run.iterations;
    if (stage == order.size() || budget <= 0) break;
    active.insert(active.end(), order[stage].begin(), order[stage].end());
  }

  // The objective is nearly flat along the focal direction, with shallow
  // local minima. Probe that direction and polish the best candidate.
  const std::vector<int> all = {0, 1, 2, 3, 4, 5, 6};
  auto scale_free_cost = [&](const Vec7& v) {
    const FisheyeParamsd p = unpack(v, base);
    const double spread = observation_spread(p, problem);
    return spread > 0.0 ? straightness_residuals(p, problem).squaredNorm() / (spread * spread)
                        : std::numeric_limits<double>::infinity();
  };
  Vec7 best = x;
  double best_cost = scale_free_cost(x);
  const double theta_obs = max_observed_angle(unpack(x, base), problem);
  for (int i = -opt.focal_probes; i <= opt.focal_probes; ++i) {
    if (i == 0) continue;
    const double s = std::pow(opt.focal_probe_span, static_cast<double>(i) / opt.focal_probes);
    const auto start = rescale_focal(unpack(x, base), s, theta_obs);
    if (!start) continue;
    const int cap = std::min(opt.probe_iterations, budget);
    if (cap <= 0) break;
    const LmRun run = run_lm(objective, base, pack(*start), all, opt, cap);
    result.iterations += run.iterations;
    budget -= run.iterations;
    const double c = scale_free_cost(run.x);
    if (c < best_cost) {
      best_cost = c;
      best = run.x;
    }
  }
  if (budget <= 0) {
    x = best;
    result.converged = false;
    return;
  }
  const LmRun polish = run_lm(objective, base, best, all, opt, budget);
  x = polish.x;
  result.iterations += polish.iterations;
  result.converged = polish.converged;
}

}  // namespace

CalibResult estimate_params(const CalibProblem& problem) {
  CalibResult result;
  result.warnings = validate_problem(problem);
  const LmOptions& opt = problem.options;

  FisheyeParamsd base = problem.initial;
  base.mu = problem.gauge_mu;
  base.mv = problem.gauge_mv;
  if (!check_monotonic(base)) throw NonMonotoneError("estimate_params: initial parameters are not monotone");

  // Growing k1 shrinks the rectified image and every residual with it, so
  // residuals are measured at the rectified scale of the initial guess.
  const double spread0 = observation_spread(base, problem);
  auto objective = [&](const FisheyeParamsd& p) -> Eigen::VectorXd {
    Eigen::VectorXd res = straightness_residuals(p, problem);
    const double spread = observation_spread(p, problem);
    if (spread > 0.0 && spread0 > 0.0) res *= spread0 / spread;
    return res;
  };

  Vec7 x = pack(base);
  const std::vector<int> all = {0, 1, 2, 3, 4, 5, 6};
  const LmRun first = run_lm(objective, base, x, all, opt, 1);
  result.iterations = first.iterations;
  if (first.converged && first.x == x) {
    // Already stationary.
    result.converged = true;
  } else {
    refine(objective, base, problem, opt, x, result);
  }

  result.params = unpack(x, base);
  const Eigen::VectorXd r = straightness_residuals(result.params, problem);
  const Eigen::Index n_res = r.size();
  result.rms_residual = n_res > 0 ? std::sqrt(r.squaredNorm() / static_cast<double>(n_res)) : 0.0;
  Eigen::Index offset = 0;
  for (const auto& l : problem.observations) {
    const auto n = static_cast<Eigen::Index>(l.points.size());
    result.line_rms.push_back(n > 0 ? std::sqrt(r.segment(offset, n).squaredNorm() / n) : 0.0);
    offset += n;
  }
  return result;
}

RpeResult evaluate_rpe(const FisheyeParamsd& estimated, const FisheyeParamsd& truth,
                       std::span<const Pixel> domain, const VirtualPinholed& pinhole) {
  if (domain.empty()) throw std::invalid_argument("evaluate_rpe: empty domain");
  if (!check_monotonic(estimated) || !check_monotonic(truth)) {
    throw NonMonotoneError("evaluate_rpe: parameters are not monotone");
  }
  const double rho_est = radial_profile_unchecked(estimated.theta_max, estimated);
  const double rho_gt = radial_profile_unchecked(truth.theta_max, truth);
  RpeResult out;
  double sum = 0.0;
  for (const auto& p : domain) {
    if (image_radius(p, estimated) > rho_est || image_radius(p, truth) > rho_gt) {
      throw OutOfRangeError("evaluate_rpe: domain pixel outside the valid disk");
    }
    sum += (rectify_point_unchecked(p, estimated, pinhole) - rectify_point_unchecked(p, truth, pinhole))
               .squaredNorm();
  }
  out.count = domain.size();
  out.mse = sum / static_cast<double>(out.count);
  out.rms = std::sqrt(out.mse);
  return out;
}

std::vector<Pixel> rpe_domain(const FisheyeParamsd& a, const FisheyeParamsd& b, int width,
                              int height, const Mask* mask) {
  const double rho_a = radial_profile_unchecked(a.theta_max, a);
  const double rho_b = radial_profile_unchecked(b.theta_max, b);
  std::vector<Pixel> out;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (mask && !(*mask)(y, x)) continue;
      const Pixel p(x, y);
      if (image_radius(p, a) <= rho_a && image_radius(p, b) <= rho_b) out.push_back(p);
    }
  }
  return out;
}

}  // namespace fisheye
