// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.
#include "fisheye/calibrator.hpp"
#include "fisheye/cli.hpp"
#include "fisheye/dataset_synth.hpp"
#include "fisheye/io.hpp"
#include "fisheye/losses.hpp"
#include "fisheye/metrics.hpp"
#include "fisheye/rectifier.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

using namespace fisheye;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Mask erode(const Mask& m, int radius) {
  Mask out = m;
  for (int y = 0; y < m.rows(); ++y) {
    for (int x = 0; x < m.cols(); ++x) {
      if (!m(y, x)) continue;
      for (int dy = -radius; dy <= radius && out(y, x); ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || xx < 0 || yy >= m.rows() || xx >= m.cols() || !m(yy, xx)) {
            out(y, x) = false;
            break;
          }
        }
      }
    }
  }
  return out;
}

// Round-trip fidelity of distort then rectify with the same parameters.
Verdict round_trip() {
  const auto t0 = Clock::now();
  const SamplerConfig sc;
  int ok = 0;
  double worst_psnr = 1e9, worst_ssim = 1e9;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const SourceImage src = make_synthetic_scene(derive_seed(101, i), sc.width, sc.height);
    const DatasetSample s = make_sample(src, sc, derive_seed(202, i));
    const VirtualPinholed pin = source_pinhole(src, sc);
    const ImageBuffer rect = rectify_image(s.fisheye_image, build_remap(s.params, pin, sc.width, sc.height));
    // Interior of the joint valid region.
    const Mask interior = erode(rect.valid && src.image.valid, 3);
    const double p = psnr(rect, src.image, &interior);
    const double q = ssim(rect, src.image, &interior);
    worst_psnr = std::min(worst_psnr, p);
    worst_ssim = std::min(worst_ssim, q);
    ok += p >= 30.0 && q >= 0.95;
  }
  const double t = seconds_since(t0);
  return {ok == 20 && t < 30.0,
          fmt("%d/20 samples pass, worst PSNR %.2f dB, worst SSIM %.4f, %.1f s", ok, worst_psnr, worst_ssim, t)};
}

struct CalibScene {
  FisheyeParamsd truth;
  VirtualPinholed pinhole;
  std::vector<Polyline> polylines;
  Mask valid;
};

CalibScene calib_scene(std::uint64_t s) {
  const SamplerConfig sc;
  const SourceImage src = make_synthetic_scene(1000 + s, 320, 320, 12);
  CalibScene out;
  out.truth = sample_params(derive_seed(7, s), sc);
  out.pinhole = source_pinhole(src, sc);
  out.polylines = distort_segments(src.segments, out.truth, out.pinhole, 320, 320).polylines;
  out.valid = distort_image(src.image, out.truth, out.pinhole, 320, 320).valid;
  return out;
}

std::vector<double> recover(double noise, int* lines_min) {
  std::vector<double> rpe;
  *lines_min = 1 << 30;
  for (std::uint64_t s = 0; s < 10; ++s) {
    CalibScene sc = calib_scene(s);
    *lines_min = std::min<int>(*lines_min, static_cast<int>(sc.polylines.size()));
    SplitMix64 rng(99 + s);
    if (noise > 0.0) {
      for (auto& pl : sc.polylines) {
        for (auto& p : pl.points) {
          p.x() += noise * rng.normal();
          p.y() += noise * rng.normal();
        }
      }
    }
    CalibProblem prob;
    prob.observations = sc.polylines;
    prob.gauge_mu = prob.gauge_mv = 100.0;
    prob.initial = init_params(320, 320, 1.2, 100.0);
    prob.pinhole = sc.pinhole;
    const CalibResult r = estimate_params(prob);
    const auto dom = rpe_domain(r.params, sc.truth, 320, 320, &sc.valid);
    rpe.push_back(dom.empty() ? INFINITY : evaluate_rpe(r.params, sc.truth, dom, sc.pinhole).rms);
  }
  return rpe;
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += fmt("%s%.3g", s.empty() ? "" : " ", x);
  return s;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return 0.5 * (v[(v.size() - 1) / 2] + v[v.size() / 2]);
}

Verdict plumb_line() {
  const auto t0 = Clock::now();
  int lines = 0;
  const auto rpe = recover(0.0, &lines);
  const int ok = static_cast<int>(std::count_if(rpe.begin(), rpe.end(), [](double r) { return r < 1.0; }));
  const double med = median(rpe);
  return {ok >= 9 && med < 0.25 && lines >= 12,
          fmt("%d/10 scenes below 1 px, median %.3g px, min lines %d, RPE [%s], %.0f s", ok, med, lines,
              list(rpe).c_str(), seconds_since(t0))};
}

Verdict noise_robustness() {
  const auto t0 = Clock::now();
  int lines = 0;
  const auto rpe = recover(0.25, &lines);
  const int ok = static_cast<int>(std::count_if(rpe.begin(), rpe.end(), [](double r) { return r < 2.0; }));
  return {ok >= 8, fmt("%d/10 scenes below 2 px, RPE [%s], %.0f s", ok, list(rpe).c_str(), seconds_since(t0))};
}

double bisect(const FisheyeParamsd& p, double r) {
  double lo = 0.0, hi = p.theta_max;
  for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
    const double mid = 0.5 * (lo + hi);
    double val = 0.0, t = mid;
    for (int j = 0; j < 5; ++j, t *= mid * mid) val += p.k(j) * t;
    (val < r ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Verdict inversion() {
  const SamplerConfig sc;
  SplitMix64 rng(4242);
  long failures = 0;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const FisheyeParamsd p = sample_params(derive_seed(31337, i), sc);
    const double rmax = radial_profile(p.theta_max, p);
    for (int j = 0; j < 100; ++j) {
      const double r = rng.uniform(0.0, rmax);
      const double err = std::abs(radial_inverse(r, p) - bisect(p, r));
      worst = std::max(worst, err);
      failures += !(err <= 1e-10);
    }
  }
  return {failures == 0, fmt("1e5 pairs, %ld failures, worst |dtheta| %.3g rad", failures, worst)};
}

Verdict geometry() {
  const SamplerConfig sc;
  double worst_map = 0.0, worst_proj = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const FisheyeParamsd p = sample_params(derive_seed(555, s), sc);
    const VirtualPinholed pin = default_pinhole(sc.width, sc.height, p.theta_max);
    SplitMix64 rng(derive_seed(556, s));
    const double rho = radial_profile(p.theta_max, p);
    std::vector<Pixel> fish;
    for (int i = 0; i < 10000; ++i) {
      // Uniform over the valid disk, strictly inside theta_max.
      const double r = 0.999 * rho * std::sqrt(rng.uniform());
      const double a = 2 * std::numbers::pi * rng.uniform();
      fish.emplace_back(p.u0 + p.mu * r * std::cos(a), p.v0 + p.mv * r * std::sin(a));
    }
    const auto rect = rectify_points(fish, p, pin);
    for (size_t i = 0; i < fish.size(); ++i) {
      if (!rect[i]) {
        worst_map = INFINITY;
        continue;
      }
      worst_map = std::max(worst_map, (forward_map(*rect[i], p, pin) - fish[i]).norm());
      worst_proj = std::max(worst_proj, (project_ray(unproject_pixel(fish[i], p), p) - fish[i]).norm());
    }
  }
  return {worst_map < 1e-8 && worst_proj < 1e-8,
          fmt("10 K x 1e4 points, worst forward/rectify %.3g px, worst project/unproject %.3g px", worst_map,
              worst_proj)};
}

Verdict losses() {
  std::vector<std::string> bad;
  auto check = [&](const char* name, double got, double want, double tol) {
    if (!(std::abs(got - want) <= tol)) bad.push_back(fmt("%s=%.12g (want %.12g)", name, got, want));
  };
  LineMap hh(4, 1), h(4, 1);
  hh.data << 5, 0, 0, 0;
  h.data << 5, 1, 0, 0;
  check("line_map", line_map_loss(h, hh).value, 0.25, 1e-9);
  check("line_map_self", line_map_loss(hh, hh).value, 0.0, 1e-9);
  check("line_map_empty", line_map_loss(h, LineMap(4, 1)).value, 0.0, 1e-9);

  const LossWeights w;
  const Vector9d t = (Vector9d() << 1.1, 0.02, -0.01, 0.003, 0.0, 110, 112, 160, 158).finished();
  Vector9d d = Vector9d::Zero();
  d.head<5>().setOnes();
  check("global_default_w", global_param_loss(t + d, t, w.w), 0.3, 1e-9);
  check("global_unit_e1", global_param_loss(t + Vector9d::Unit(0), t, Vector9d::Ones()), 1.0 / 9.0, 1e-9);
  check("local_e3", local_param_loss(t.head<5>() + Vector5d::Unit(2), t.head<5>(), w.w.head<5>()), 0.1, 1e-9);
  ParamHeads heads;
  heads.global(0) = 1.0;
  for (auto& l : heads.local) l(0) = 7.0;
  check("combine_k1", combine_params(heads).k(0), 6.0, 1e-9);

  // Reference scene for the curvature term.
  const SamplerConfig sc;
  const SourceImage src = make_synthetic_scene(5, 320, 320);
  const DatasetSample s = make_sample(src, sc, 11);
  const VirtualPinholed pin = source_pinhole(src, sc);
  const std::vector<Pixel> omega = positive_pixels(s.line_map_distorted);
  FisheyeParamsd kd = s.params;
  kd.u0 += 0.8;
  kd.v0 -= 0.5;
  kd.k(1) *= 1.05;
  check("curvature_self", curvature_loss(s.params, s.params, omega, pin), 0.0, 1e-9);
  check("curvature_vs_rpe", curvature_loss(kd, s.params, omega, pin), evaluate_rpe(kd, s.params, omega, pin).mse,
        1e-9);
  check("total_at_truth", total_loss(ParamHeads::consensus(s.params), s.params, omega, pin).total, 0.0, 1e-9);

  // Finite differences versus analytic gradients.
  double worst = 0.0;
  auto rel = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      worst = std::max(worst, std::abs(a(i) - b(i)) / std::max(1e-8, std::abs(b(i))));
    }
  };
  SplitMix64 rng(8);
  Vector9d kg, kt;
  for (int i = 0; i < 9; ++i) kg(i) = rng.normal(), kt(i) = rng.normal();
  rel(finite_diff_grad([&](const Eigen::VectorXd& x) { return global_param_loss(x, kt, w.w); }, kg, 1e-5),
      global_param_loss_gradient(kg, kt, w.w));
  const Vector5d kl = kg.head<5>(), klt = kt.head<5>(), w5 = w.w.head<5>();
  rel(finite_diff_grad([&](const Eigen::VectorXd& x) { return local_param_loss(x, klt, w5); }, kl, 1e-5),
      local_param_loss_gradient(kl, klt, w5));
  const Vector9d x = kd.vector();
  const Vector9d g = curvature_loss_gradient(kd, s.params, omega, pin);
  Eigen::VectorXd fd(9);
  for (int i = 0; i < 9; ++i) {
    const double step = 1e-6 * std::max(1.0, std::abs(x(i)));
    Vector9d a = x, b = x;
    a(i) += step;
    b(i) -= step;
    fd(i) = (curvature_loss(FisheyeParamsd::from_vector(a, kd.theta_max), s.params, omega, pin) -
             curvature_loss(FisheyeParamsd::from_vector(b, kd.theta_max), s.params, omega, pin)) /
            (2 * step);
  }
  rel(g, fd);
  if (worst > 1e-4) bad.push_back(fmt("gradient relative error %.3g", worst));
  return {bad.empty(), bad.empty() ? fmt("11 examples within 1e-9, worst gradient relative error %.3g", worst)
                                   : bad.front()};
}

Verdict metrics() {
  std::vector<std::string> bad;
  SplitMix64 rng(77);
  ImageBuffer a(48, 40, 3);
  for (auto& c : a.channels) c = c.unaryExpr([&](double) { return rng.uniform(); });
  const double self = ssim(a, a);
  if (!(std::abs(self - 1.0) <= 1e-12)) bad.push_back(fmt("ssim self %.17g", self));
  const double p = psnr(ImageBuffer(16, 16, 1, 0.0), ImageBuffer(16, 16, 1, 0.5));
  if (!(std::abs(p - 10 * std::log10(4.0)) <= 1e-9)) bad.push_back(fmt("psnr %.17g", p));

  // Rectified ground-truth line map of a real sample.
  const SamplerConfig sc;
  const DatasetSample s = make_sample(make_synthetic_scene(9, 320, 320), sc, 3);
  const LineMap& g = s.line_map_rectified;
  const PRResult id = line_map_pr(g, g);
  if (id.precision != 1.0 || id.recall != 1.0 || id.f_value != 1.0) bad.push_back("identity P/R/F != 1");

  LineMap shifted = g;
  shifted.data.setZero();
  shifted.data.rightCols(g.width() - 1) = g.data.leftCols(g.width() - 1);
  // Brute-force tolerant set intersection.
  auto oracle = [](const LineMap& from, const LineMap& to, int tol) {
    long hit = 0, total = 0;
    for (int y = 0; y < from.height(); ++y) {
      for (int x = 0; x < from.width(); ++x) {
        if (!(from.data(y, x) > 0)) continue;
        ++total;
        bool found = false;
        for (int yy = std::max(0, y - tol); yy <= std::min(from.height() - 1, y + tol) && !found; ++yy) {
          for (int xx = std::max(0, x - tol); xx <= std::min(from.width() - 1, x + tol) && !found; ++xx) {
            found = to.data(yy, xx) > 0;
          }
        }
        hit += found;
      }
    }
    return static_cast<double>(hit) / static_cast<double>(total);
  };
  std::string shift_detail;
  for (int tol : {0, 1}) {
    const PRResult r = line_map_pr(shifted, g, tol);
    const double po = oracle(shifted, g, tol), ro = oracle(g, shifted, tol);
    if (r.precision != po || r.recall != ro) bad.push_back(fmt("shift tol %d mismatch", tol));
    shift_detail += fmt(" tol %d: P %.4f R %.4f;", tol, r.precision, r.recall);
  }
  return {bad.empty(), bad.empty() ? fmt("ssim self 1, psnr closed form, identity P=R=F=1, shifted copy exact;%s",
                                         shift_detail.c_str())
                                   : bad.front()};
}

// Independent point-to-segment distance.
double seg_dist(double px, double py, const LineSegment& s) {
  const double ax = s.x.x(), ay = s.x.y(), bx = s.x_prime.x(), by = s.x_prime.y();
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (ax + t * dx), py - (ay + t * dy));
}

Verdict line_map_target() {
  SplitMix64 rng(64);
  int exact = 0;
  long mismatched = 0;
  for (int scene = 0; scene < 50; ++scene) {
    std::vector<LineSegment> segs;
    const int n = 1 + static_cast<int>(rng.uniform() * 8);
    for (int i = 0; i < n; ++i) {
      segs.push_back({Pixel(rng.uniform(-8, 72), rng.uniform(-8, 72)), Pixel(rng.uniform(-8, 72), rng.uniform(-8, 72))});
    }
    const LineMap m = render_line_map(segs, 64, 64);
    long bad = 0;
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        bool on = false;
        for (const auto& s : segs) on = on || seg_dist(x, y, s) < 0.5;
        bad += on != (m.data(y, x) > 0);
      }
    }
    mismatched += bad;
    exact += bad == 0;
  }
  return {exact == 50, fmt("%d/50 scenes exact, %ld mismatched pixels", exact, mismatched)};
}

std::uint64_t fnv1a(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::uint64_t h = 1469598103934665603ull;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "fisheye_acceptance_determinism";
  fs::remove_all(root);
  std::uint64_t hashes[2] = {0, 0};
  std::uint64_t tree[2] = {0, 0};
  for (int run = 0; run < 2; ++run) {
    const fs::path out = root / std::to_string(run);
    const int code = cli::run(std::vector<std::string>{"gen-dataset", "--synthetic", "2", "--variants", "2", "--seed",
                                                       "20190101", "--out", out.string()});
    if (code != 0) return {false, fmt("gen-dataset exited with %d", code)};
    hashes[run] = fnv1a(out / "manifest.json");
    // Every file, in path order.
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(out)) {
      if (e.is_regular_file()) files.push_back(fs::relative(e.path(), out));
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) tree[run] = tree[run] * 31 + fnv1a(out / f) + std::hash<std::string>{}(f.string());
  }
  fs::remove_all(root);
  return {hashes[0] == hashes[1] && tree[0] == tree[1],
          fmt("manifest hash %016llx vs %016llx, full tree %s", static_cast<unsigned long long>(hashes[0]),
              static_cast<unsigned long long>(hashes[1]), tree[0] == tree[1] ? "identical" : "differs")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"round-trip fidelity", round_trip},
      {"plumb-line recovery", plumb_line},
      {"noise robustness", noise_robustness},
      {"inversion oracle", inversion},
      {"geometry round-trips", geometry},
      {"loss correctness", losses},
      {"metric correctness", metrics},
      {"line-map target", line_map_target},
      {"determinism", determinism},
  };
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s %zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
