#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace fisheye {

/// Raised when an incidence angle leaves [0, theta_max].
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when a distorted radius exceeds the profile at theta_max.
class OutOfRangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Raised when r(theta) is not strictly increasing on [0, theta_max].
class NonMonotoneError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kDefaultThetaMax = 1.35;

/// Nine-parameter polynomial fisheye model.
///
/// The radial profile is r(theta) = k1 theta + k2 theta^3 + ... + k5 theta^9
/// in image units; (mu, mv) convert image units to pixels and (u0, v0) is the
/// principal point. theta_max bounds the valid incidence angle.
template <typename Scalar_ = double>
struct FisheyeParams {
  using Scalar = Scalar_;
  using Coeffs = Eigen::Matrix<Scalar, 5, 1>;
  using Vector9 = Eigen::Matrix<Scalar, 9, 1>;

  Coeffs k = Coeffs(Scalar(1), Scalar(0), Scalar(0), Scalar(0), Scalar(0));
  Scalar mu = Scalar(1);
  Scalar mv = Scalar(1);
  Scalar u0 = Scalar(0);
  Scalar v0 = Scalar(0);
  Scalar theta_max = Scalar(kDefaultThetaMax);

  /// (k1..k5, mu, mv, u0, v0), the ordering used by the loss functions.
  Vector9 vector() const {
    Vector9 out;
    out << k, mu, mv, u0, v0;
    return out;
  }

  static FisheyeParams from_vector(const Vector9& v,
                                   Scalar theta_max = Scalar(kDefaultThetaMax)) {
    FisheyeParams p;
    p.k = v.template head<5>();
    p.mu = v(5);
    p.mv = v(6);
    p.u0 = v(7);
    p.v0 = v(8);
    p.theta_max = theta_max;
    return p;
  }

  template <typename Other>
  FisheyeParams<Other> cast() const {
    FisheyeParams<Other> p;
    p.k = k.template cast<Other>();
    p.mu = Other(mu);
    p.mv = Other(mv);
    p.u0 = Other(u0);
    p.v0 = Other(v0);
    p.theta_max = Other(theta_max);
    return p;
  }

  bool operator==(const FisheyeParams&) const = default;
};

/// Rectified output frame: an ideal pinhole with focal length f (pixels) and
/// principal point at the raster center.
template <typename Scalar_ = double>
struct VirtualPinhole {
  using Scalar = Scalar_;
  Scalar f = Scalar(1);
  int width = 1;
  int height = 1;

  Eigen::Matrix<Scalar, 2, 1> center() const {
    return {Scalar(width - 1) / Scalar(2), Scalar(height - 1) / Scalar(2)};
  }
};

template <typename Scalar_ = double>
struct Angle {
  using Scalar = Scalar_;
  Scalar theta = Scalar(0);
  Scalar phi = Scalar(0);
};

using FisheyeParamsd = FisheyeParams<double>;
using VirtualPinholed = VirtualPinhole<double>;
using Angled = Angle<double>;
using Pixel = Eigen::Vector2d;

namespace detail {

template <typename Scalar>
Scalar horner_odd(const Eigen::Matrix<Scalar, 5, 1>& k, Scalar theta) {
  const Scalar t2 = theta * theta;
  return theta * (k(0) + t2 * (k(1) + t2 * (k(2) + t2 * (k(3) + t2 * k(4)))));
}

}  // namespace detail

/// r(theta) without domain checks.
template <typename Scalar>
Scalar radial_profile_unchecked(Scalar theta, const FisheyeParams<Scalar>& params) {
  return detail::horner_odd(params.k, theta);
}

/// dr/dtheta = k1 + 3 k2 theta^2 + 5 k3 theta^4 + 7 k4 theta^6 + 9 k5 theta^8.
template <typename Scalar>
Scalar radial_derivative(Scalar theta, const FisheyeParams<Scalar>& params) {
  const auto& k = params.k;
  const Scalar t2 = theta * theta;
  return k(0) + t2 * (3 * k(1) + t2 * (5 * k(2) + t2 * (7 * k(3) + t2 * 9 * k(4))));
}

template <typename Scalar>
Scalar radial_profile(Scalar theta, const FisheyeParams<Scalar>& params) {
  if (!(theta >= Scalar(0)) || theta > params.theta_max) {
    throw DomainError("radial_profile: theta " + std::to_string(double(theta)) +
                      " outside [0, " + std::to_string(double(params.theta_max)) + "]");
  }
  return radial_profile_unchecked(theta, params);
}

/// True iff dr/dtheta > 0 on [0, theta_max]. Samples the derivative on a grid
/// with step <= 1e-3 rad and additionally checks every real root of the
/// derivative (a quartic in theta^2) that falls inside the interval.
template <typename Scalar>
bool check_monotonic(const FisheyeParams<Scalar>& params, Scalar theta_max) {
  using std::abs;
  if (!(theta_max > Scalar(0))) return false;
  const auto& k = params.k;
  if (!k.allFinite() || !(k(0) > Scalar(0))) return false;

  const int steps = std::max(1, static_cast<int>(std::ceil(double(theta_max) / 1e-3)));
  for (int i = 0; i <= steps; ++i) {
    const Scalar theta = theta_max * Scalar(i) / Scalar(steps);
    if (!(radial_derivative(theta, params) > Scalar(0))) return false;
  }

  // Q(t) = k1 + 3 k2 t + 5 k3 t^2 + 7 k4 t^3 + 9 k5 t^4, t = theta^2.
  Eigen::Matrix<double, 5, 1> q;
  q << double(k(0)), 3 * double(k(1)), 5 * double(k(2)), 7 * double(k(3)),
      9 * double(k(4));
  int degree = 4;
  const double scale = q.cwiseAbs().maxCoeff();
  while (degree > 0 && abs(q(degree)) <= 1e-300 * scale) --degree;
  if (degree == 0) return true;

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
  for (int i = 1; i < degree; ++i) companion(i, i - 1) = 1.0;
  for (int i = 0; i < degree; ++i) companion(i, degree - 1) = -q(i) / q(degree);
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  const double t_max = double(theta_max) * double(theta_max);
  for (int i = 0; i < degree; ++i) {
    const std::complex<double> root = solver.eigenvalues()(i);
    if (abs(root.imag()) > 1e-6 * std::max(1.0, abs(root.real()))) continue;
    const double t = root.real();
    if (t < 0.0 || t > t_max) continue;
    const double value = q(0) + t * (q(1) + t * (q(2) + t * (q(3) + t * q(4))));
    if (value <= 1e-12 * scale) return false;
  }
  return true;
}

template <typename Scalar>
bool check_monotonic(const FisheyeParams<Scalar>& params) {
  return check_monotonic(params, params.theta_max);
}

/// Inverse of r(theta) on [0, theta_max] for parameters already known to be
/// monotone. Newton seeded at r_d / k1, falling back to bisection whenever a
/// step leaves the current bracket.
template <typename Scalar>
Scalar radial_inverse_unchecked(Scalar r_d, const FisheyeParams<Scalar>& params) {
  using std::abs;
  if (r_d <= Scalar(0)) return Scalar(0);
  const Scalar r_max = radial_profile_unchecked(params.theta_max, params);
  if (r_d > r_max) {
    throw OutOfRangeError("radial_inverse: radius " + std::to_string(double(r_d)) +
                          " exceeds r(theta_max) = " + std::to_string(double(r_max)));
  }
  if (r_d == r_max) return params.theta_max;

  Scalar lo = Scalar(0);
  Scalar hi = params.theta_max;
  Scalar theta = std::clamp(r_d / params.k(0), lo, hi);
  constexpr double kTol = 1e-12;
  for (int iter = 0; iter < 100; ++iter) {
    const Scalar f = radial_profile_unchecked(theta, params) - r_d;
    if (f == Scalar(0)) return theta;
    if (f > Scalar(0)) {
      hi = theta;
    } else {
      lo = theta;
    }
    const Scalar df = radial_derivative(theta, params);
    Scalar next = theta - f / df;
    if (!(df > Scalar(0)) || !(next > lo && next < hi)) next = (lo + hi) / Scalar(2);
    const Scalar step = abs(next - theta);
    theta = next;
    if (step < Scalar(kTol)) {
      // One more Newton update once converged; error is then O(step^2).
      const Scalar f2 = radial_profile_unchecked(theta, params) - r_d;
      const Scalar d2 = radial_derivative(theta, params);
      if (d2 > Scalar(0)) {
        const Scalar polished = theta - f2 / d2;
        if (polished >= lo && polished <= hi) theta = polished;
      }
      return theta;
    }
    if (hi - lo < Scalar(kTol) * Scalar(1e-3)) return (lo + hi) / Scalar(2);
  }
  return theta;
}

template <typename Scalar>
Scalar radial_inverse(Scalar r_d, const FisheyeParams<Scalar>& params) {
  if (!check_monotonic(params)) {
    throw NonMonotoneError("radial_inverse: r(theta) is not strictly increasing on [0, theta_max]");
  }
  if (r_d < Scalar(0)) {
    throw OutOfRangeError("radial_inverse: negative radius");
  }
  return radial_inverse_unchecked(r_d, params);
}

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> project_ray(const Angle<Scalar>& ray,
                                        const FisheyeParams<Scalar>& params) {
  using std::cos;
  using std::sin;
  const Scalar r = radial_profile(ray.theta, params);
  return {params.mu * r * cos(ray.phi) + params.u0, params.mv * r * sin(ray.phi) + params.v0};
}

/// Normalized distorted radius of a fisheye pixel, in image units.
template <typename Scalar>
Scalar image_radius(const Eigen::Matrix<Scalar, 2, 1>& pixel,
                    const FisheyeParams<Scalar>& params) {
  using std::hypot;
  return hypot((pixel.x() - params.u0) / params.mu, (pixel.y() - params.v0) / params.mv);
}

/// atan2 in (-pi, pi]; -pi only arises from a negative-zero y.
template <typename Scalar>
Scalar azimuth(Scalar y, Scalar x) {
  using std::atan2;
  const Scalar a = atan2(y, x);
  return a <= -Scalar(EIGEN_PI) ? a + Scalar(2 * EIGEN_PI) : a;
}

/// Inverse of project_ray, assuming monotone parameters.
template <typename Scalar>
Angle<Scalar> unproject_pixel_unchecked(const Eigen::Matrix<Scalar, 2, 1>& pixel,
                                        const FisheyeParams<Scalar>& params) {
  const Scalar x = (pixel.x() - params.u0) / params.mu;
  const Scalar y = (pixel.y() - params.v0) / params.mv;
  const Scalar rho = image_radius(pixel, params);
  Angle<Scalar> out;
  if (rho == Scalar(0)) return out;  // phi is undefined on the axis; use 0
  out.theta = radial_inverse_unchecked(rho, params);
  out.phi = azimuth(y, x);
  return out;
}

template <typename Scalar>
Angle<Scalar> unproject_pixel(const Eigen::Matrix<Scalar, 2, 1>& pixel,
                              const FisheyeParams<Scalar>& params) {
  if (!check_monotonic(params)) {
    throw NonMonotoneError("unproject_pixel: parameters are not monotone");
  }
  return unproject_pixel_unchecked(pixel, params);
}

/// Incidence angle of a rectified pixel under the virtual pinhole.
template <typename Scalar>
Angle<Scalar> pinhole_angle(const Eigen::Matrix<Scalar, 2, 1>& rect_pixel,
                            const VirtualPinhole<Scalar>& pinhole) {
  using std::atan;
  using std::hypot;
  const Eigen::Matrix<Scalar, 2, 1> p = rect_pixel - pinhole.center();
  const Scalar norm = hypot(p.x(), p.y());
  Angle<Scalar> out;
  if (norm == Scalar(0)) return out;
  out.theta = atan(norm / pinhole.f);
  out.phi = azimuth(p.y(), p.x());
  return out;
}

/// Perspective projection x = f tan(theta) (cos phi, sin phi) + center.
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> pinhole_project(const Angle<Scalar>& ray,
                                            const VirtualPinhole<Scalar>& pinhole) {
  using std::cos;
  using std::sin;
  using std::tan;
  const Scalar r = pinhole.f * tan(ray.theta);
  return pinhole.center() + Eigen::Matrix<Scalar, 2, 1>(r * cos(ray.phi), r * sin(ray.phi));
}

/// Maps a rectified pixel to the fisheye image: p_d = T(p, K).
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> forward_map(const Eigen::Matrix<Scalar, 2, 1>& rect_pixel,
                                        const FisheyeParams<Scalar>& params,
                                        const VirtualPinhole<Scalar>& pinhole) {
  return project_ray(pinhole_angle(rect_pixel, pinhole), params);
}

/// Inverse of forward_map, assuming monotone parameters.
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> rectify_point_unchecked(const Eigen::Matrix<Scalar, 2, 1>& pixel,
                                                    const FisheyeParams<Scalar>& params,
                                                    const VirtualPinhole<Scalar>& pinhole) {
  return pinhole_project(unproject_pixel_unchecked(pixel, params), pinhole);
}

}  // namespace fisheye
