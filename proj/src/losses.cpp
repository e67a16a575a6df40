#include "fisheye/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace fisheye {

ParamHeads ParamHeads::consensus(const FisheyeParamsd& params) {
  ParamHeads h;
  h.global = params.vector();
  for (auto& l : h.local) l = params.k;
  return h;
}

namespace {

void require_same_size(const LineMap& a, const LineMap& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw std::invalid_argument("line_map_loss: map sizes differ");
  }
}

struct ClassWeights {
  double positive;  // applied to the O+ sum
  double negative;  // applied to the O- sum
};

ClassWeights class_weights(const LineMap& h_hat) {
  const double total = static_cast<double>(h_hat.data.size());
  const double n_pos = static_cast<double>((h_hat.data > 0.0).count());
  return {(total - n_pos) / total, n_pos / total};
}

}  // namespace

LineMapLoss line_map_loss(const LineMap& h, const LineMap& h_hat) {
  require_same_size(h, h_hat);
  LineMapLoss out;
  if (h_hat.data.size() == 0) return out;
  const ClassWeights cw = class_weights(h_hat);
  out.degenerate = cw.negative == 0.0;
  double pos = 0.0;
  double neg = 0.0;
  for (Eigen::Index i = 0; i < h_hat.data.size(); ++i) {
    const double d = h.data(i) - h_hat.data(i);
    if (h_hat.data(i) > 0.0) {
      pos += d * d;
    } else {
      neg += d * d;
    }
  }
  out.value = cw.positive * pos + cw.negative * neg;
  return out;
}

Plane<double> line_map_loss_gradient(const LineMap& h, const LineMap& h_hat) {
  require_same_size(h, h_hat);
  if (h_hat.data.size() == 0) return h.data;
  const ClassWeights cw = class_weights(h_hat);
  const Plane<double> diff = 2.0 * (h.data - h_hat.data);
  return (h_hat.data > 0.0).select(cw.positive * diff, cw.negative * diff);
}

double global_param_loss(const Vector9d& k_global, const Vector9d& k_truth, const Vector9d& w) {
  return (w.array() * (k_global - k_truth).array().square()).sum() / 9.0;
}

Vector9d global_param_loss_gradient(const Vector9d& k_global, const Vector9d& k_truth,
                                    const Vector9d& w) {
  return (2.0 / 9.0) * w.cwiseProduct(k_global - k_truth);
}

double local_param_loss(const Vector5d& k_local, const Vector5d& k_truth, const Vector5d& w) {
  return (w.array() * (k_local - k_truth).array().square()).sum() / 5.0;
}

Vector5d local_param_loss_gradient(const Vector5d& k_local, const Vector5d& k_truth,
                                   const Vector5d& w) {
  return (2.0 / 5.0) * w.cwiseProduct(k_local - k_truth);
}

namespace {

struct Rectified {
  bool ok = false;
  Pixel point = Pixel::Zero();
};

Rectified rectify_or_flag(const Pixel& p, const FisheyeParamsd& params, double rho_max,
                          const VirtualPinholed& pinhole) {
  if (image_radius(p, params) > rho_max) return {};
  return {true, rectify_point_unchecked(p, params, pinhole)};
}

void require_monotone(const FisheyeParamsd& a, const FisheyeParamsd& b) {
  if (!check_monotonic(a) || !check_monotonic(b)) {
    throw NonMonotoneError("curvature_loss: parameters are not monotone");
  }
}

/// d F(p; K) / d K for the nine parameters, F being the rectification map.
Eigen::Matrix<double, 2, 9> rectify_jacobian(const Pixel& p, const FisheyeParamsd& params,
                                             const VirtualPinholed& pinhole) {
  Eigen::Matrix<double, 2, 9> jac = Eigen::Matrix<double, 2, 9>::Zero();
  const double a = (p.x() - params.u0) / params.mu;
  const double b = (p.y() - params.v0) / params.mv;
  const double rho = std::hypot(a, b);
  const double f = pinhole.f;

  Eigen::Matrix2d d_ab;  // dF / d(a, b)
  if (rho == 0.0) {
    d_ab = (f / params.k(0)) * Eigen::Matrix2d::Identity();
  } else {
    const double theta = radial_inverse_unchecked(rho, params);
    const double dr = radial_derivative(theta, params);
    const double sec2 = 1.0 / (std::cos(theta) * std::cos(theta));
    const double g = f * std::tan(theta) / rho;
    const double dg = (f * sec2 / dr - g) / rho;
    const Eigen::Vector2d ab(a, b);
    d_ab = g * Eigen::Matrix2d::Identity() + (dg / rho) * ab * ab.transpose();
    double power = theta;
    for (int i = 0; i < 5; ++i) {
      jac.col(i) = f * sec2 * (-power / dr) * ab / rho;
      power *= theta * theta;
    }
  }
  jac.col(5) = d_ab.col(0) * (-a / params.mu);
  jac.col(6) = d_ab.col(1) * (-b / params.mv);
  jac.col(7) = d_ab.col(0) * (-1.0 / params.mu);
  jac.col(8) = d_ab.col(1) * (-1.0 / params.mv);
  return jac;
}

}  // namespace

double curvature_loss(const FisheyeParamsd& k_d, const FisheyeParamsd& k_gt,
                      std::span<const Pixel> omega_plus, const VirtualPinholed& pinhole) {
  if (omega_plus.empty()) throw std::invalid_argument("curvature_loss: empty positive set");
  require_monotone(k_d, k_gt);
  const double rho_d = radial_profile_unchecked(k_d.theta_max, k_d);
  const double rho_gt = radial_profile_unchecked(k_gt.theta_max, k_gt);
  double sum = 0.0;
  for (const auto& p : omega_plus) {
    const Rectified a = rectify_or_flag(p, k_d, rho_d, pinhole);
    const Rectified b = rectify_or_flag(p, k_gt, rho_gt, pinhole);
    sum += (a.ok && b.ok) ? (a.point - b.point).squaredNorm() : kDomainPenalty * kDomainPenalty;
  }
  return sum / static_cast<double>(omega_plus.size());
}

Vector9d curvature_loss_gradient(const FisheyeParamsd& k_d, const FisheyeParamsd& k_gt,
                                 std::span<const Pixel> omega_plus, const VirtualPinholed& pinhole) {
  if (omega_plus.empty()) throw std::invalid_argument("curvature_loss: empty positive set");
  require_monotone(k_d, k_gt);
  const double rho_d = radial_profile_unchecked(k_d.theta_max, k_d);
  const double rho_gt = radial_profile_unchecked(k_gt.theta_max, k_gt);
  Vector9d grad = Vector9d::Zero();
  for (const auto& p : omega_plus) {
    const Rectified a = rectify_or_flag(p, k_d, rho_d, pinhole);
    const Rectified b = rectify_or_flag(p, k_gt, rho_gt, pinhole);
    if (!(a.ok && b.ok)) continue;
    grad += 2.0 * rectify_jacobian(p, k_d, pinhole).transpose() * (a.point - b.point);
  }
  return grad / static_cast<double>(omega_plus.size());
}

FisheyeParamsd combine_params(const ParamHeads& heads, double theta_max) {
  Vector9d v = heads.global;
  // Mean as an offset from the global head, exact when the heads agree.
  Vector5d offset = Vector5d::Zero();
  for (const auto& l : heads.local) offset += l - heads.global.head<5>();
  v.head<5>() += offset / 6.0;
  return FisheyeParamsd::from_vector(v, theta_max);
}

LossBreakdown total_loss(const ParamHeads& heads, const FisheyeParamsd& k_gt,
                         std::span<const Pixel> omega_plus, const VirtualPinholed& pinhole,
                         const LossWeights& weights) {
  if ((weights.w.array() < 0.0).any() || weights.lambda_g < 0.0 || weights.lambda_loc < 0.0 ||
      weights.lambda_c < 0.0) {
    throw std::invalid_argument("total_loss: weights must be nonnegative");
  }
  const Vector9d truth = k_gt.vector();
  LossBreakdown out;
  out.global = global_param_loss(heads.global, truth, weights.w);
  const Vector5d w5 = weights.w.head<5>();
  for (const auto& l : heads.local) out.local += local_param_loss(l, truth.head<5>(), w5);
  out.curvature = curvature_loss(combine_params(heads, k_gt.theta_max), k_gt, omega_plus, pinhole);
  out.total = weights.lambda_g * out.global + weights.lambda_loc * out.local +
              weights.lambda_c * out.curvature;
  return out;
}

Eigen::VectorXd finite_diff_grad(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += step;
    xm(i) -= step;
    g(i) = (f(xp) - f(xm)) / (2.0 * step);
  }
  return g;
}

std::vector<Pixel> positive_pixels(const LineMap& map) {
  std::vector<Pixel> out;
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      if (map.data(y, x) > 0.0) out.emplace_back(x, y);
    }
  }
  return out;
}

}  // namespace fisheye
