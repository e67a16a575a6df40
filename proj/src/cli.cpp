#include "fisheye/cli.hpp"

#include "fisheye/calibrator.hpp"
#include "fisheye/dataset_synth.hpp"
#include "fisheye/io.hpp"
#include "fisheye/losses.hpp"
#include "fisheye/metrics.hpp"
#include "fisheye/rectifier.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <memory>
#include <optional>

namespace fisheye::cli {

namespace fs = std::filesystem;
using io::json;

namespace {

// JSON config: nested objects name subcommands, bare keys go to `section`
// (the subcommand on the command line).
class ConfigJson : public CLI::Config {
 public:
  explicit ConfigJson(std::string section) : section_(std::move(section)) {}

  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j = json::object();
    for (const CLI::Option* opt : app->get_options({})) {
      if (!opt->get_configurable() || opt->get_single_name().empty()) continue;
      if (opt->count() > 0) {
        j[opt->get_single_name()] = opt->results().size() == 1 ? json(opt->results()[0]) : json(opt->results());
      } else if (default_also && !opt->get_default_str().empty()) {
        j[opt->get_single_name()] = opt->get_default_str();
      }
    }
    return io::dump(j);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      input >> j;
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it->is_object()) {
        walk(*it, {it.key()}, items);
      } else {
        std::vector<std::string> parents;
        if (!section_.empty()) parents.push_back(section_);
        items.push_back(leaf(it.key(), *it, parents));
      }
    }
    return items;
  }

 private:
  static CLI::ConfigItem leaf(const std::string& name, const json& value,
                              const std::vector<std::string>& parents) {
    CLI::ConfigItem item;
    item.name = name;
    item.parents = parents;
    auto text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_array()) {
      for (const auto& e : value) item.inputs.push_back(text(e));
    } else {
      item.inputs.push_back(text(value));
    }
    return item;
  }

  static void walk(const json& j, const std::vector<std::string>& parents,
                   std::vector<CLI::ConfigItem>& items) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it->is_object()) {
        auto p = parents;
        p.push_back(it.key());
        walk(*it, p, items);
      } else {
        items.push_back(leaf(it.key(), *it, parents));
      }
    }
  }

  std::string section_;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotConverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  return p.parent_path() / (p.stem().string() + suffix);
}

void write_output_json(const std::optional<fs::path>& out, const json& j) {
  if (out) {
    io::write_json(*out, j);
  } else {
    std::cout << io::dump(j) << "\n";
  }
}

// Params from a bare params object, or from any object holding "params"
// (sample records, calibration results).
FisheyeParamsd load_params(const fs::path& path) {
  const json j = io::read_json(path);
  try {
    if (j.is_object() && j.contains("params")) return io::params_from_json(j.at("params"));
    return io::params_from_json(j);
  } catch (const io::ParseError& e) {
    throw io::ParseError(path.string() + ": " + e.what());
  }
}

void require_monotone(const FisheyeParamsd& p, const std::string& what) {
  if (!check_monotonic(p)) {
    throw ValidationError(what + ": radial profile is not monotone on [0, theta_max]");
  }
}

struct SamplerFlags {
  std::optional<int> variants;
  std::optional<int> width;
  std::optional<int> height;
  std::optional<double> theta_max;
  std::optional<double> min_coverage;

  void add(CLI::App* sub) {
    sub->add_option("--variants", variants, "distortion variants per source");
    sub->add_option("--width", width, "output width")->check(CLI::PositiveNumber);
    sub->add_option("--height", height, "output height")->check(CLI::PositiveNumber);
    sub->add_option("--theta-max", theta_max, "largest modeled incidence angle (rad)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--min-coverage", min_coverage, "image circle / half-diagonal lower bound");
  }

  void apply(SamplerConfig& c) const {
    if (variants) c.variants = *variants;
    if (width) c.width = *width;
    if (height) c.height = *height;
    if (theta_max) c.theta_max = *theta_max;
    if (min_coverage) c.min_coverage = *min_coverage;
  }
};

// gen-dataset -----------------------------------------------------------

struct GenDatasetArgs {
  std::vector<fs::path> annotations;
  int synthetic = 0;
  fs::path out;
  std::uint64_t seed = 20190101;
  std::string split = "train";
  SamplerFlags sampler;
};

int cmd_gen_dataset(const GenDatasetArgs& a) {
  if (a.annotations.empty() && a.synthetic <= 0) {
    throw io::ParseError("gen-dataset: give --annotations or --synthetic");
  }
  std::vector<SourceImage> sources;
  for (const auto& path : a.annotations) {
    if (!fs::exists(path)) throw io::IoError("annotation file not found: " + path.string());
    const io::Annotation ann = io::read_annotation(path);
    SourceImage src;
    src.image = io::read_png(ann.image_path);
    src.segments = ann.segments;
    src.name = path.stem().string();
    sources.push_back(std::move(src));
  }
  DatasetConfig config;
  config.seed = a.seed;
  config.split = a.split;
  a.sampler.apply(config.sampler);
  if (config.sampler.variants < 1) throw io::ParseError("gen-dataset: --variants must be >= 1");
  for (int i = 0; i < a.synthetic; ++i) {
    SourceImage s = make_synthetic_scene(derive_seed(a.seed ^ 0x5ce9e5ull, static_cast<std::uint64_t>(i)),
                                         config.sampler.width, config.sampler.height);
    s.name = "synthetic_" + std::to_string(i);
    sources.push_back(std::move(s));
  }
  const Manifest m = build_dataset(sources, config, a.out);
  std::cout << m.path.string() << "\n";
  return kOk;
}

// distort --------------------------------------------------------------

struct DistortArgs {
  fs::path image;
  std::optional<fs::path> params;
  std::optional<fs::path> annotation;
  fs::path out;
  std::uint64_t seed = 20190101;
  std::optional<double> focal;
  SamplerFlags sampler;
};

int cmd_distort(const DistortArgs& a) {
  SourceImage src;
  if (a.annotation) {
    const io::Annotation ann = io::read_annotation(*a.annotation);
    src.image = io::read_png(ann.image_path);
    src.segments = ann.segments;
  } else {
    src.image = io::read_png(a.image);
  }
  SamplerConfig sc;
  sc.width = src.image.width();
  sc.height = src.image.height();
  a.sampler.apply(sc);
  FisheyeParamsd params;
  if (a.params) {
    params = load_params(*a.params);
    require_monotone(params, a.params->string());
  } else {
    params = sample_params(a.seed, sc);
  }
  VirtualPinholed pinhole = source_pinhole(src, sc);
  if (a.focal) pinhole.f = *a.focal;

  const ImageBuffer fish = distort_image(src.image, params, pinhole, sc.width, sc.height);
  io::write_png(a.out, fish);
  io::write_mask_png(with_suffix(a.out, "_mask.png"), fish.valid);
  json record{{"image", a.out.filename().string()},
              {"mask", with_suffix(a.out, "_mask.png").filename().string()},
              {"params", io::params_to_json(params)},
              {"pinhole_f", pinhole.f},
              {"width", sc.width},
              {"height", sc.height}};
  if (!a.params) record["seed"] = a.seed;
  if (!src.segments.empty()) {
    const auto ds = distort_segments(src.segments, params, pinhole, sc.width, sc.height);
    record["segments"] = io::segments_to_json(src.segments);
    record["polylines"] = io::polylines_to_json(ds.polylines);
  }
  io::write_json(with_suffix(a.out, ".json"), record);
  return kOk;
}

// rectify --------------------------------------------------------------

struct RectifyArgs {
  fs::path image;
  fs::path params;
  fs::path out;
  std::optional<fs::path> mask_out;
  std::optional<fs::path> mask_in;
  std::optional<double> focal;
  std::optional<int> width;
  std::optional<int> height;
};

int cmd_rectify(const RectifyArgs& a) {
  ImageBuffer img = io::read_png(a.image);
  if (a.mask_in) {
    img.valid = io::read_mask_png(*a.mask_in);
    if (img.valid.rows() != img.height() || img.valid.cols() != img.width()) {
      throw io::ParseError(a.mask_in->string() + ": mask size differs from the image");
    }
    img.enforce_mask();
  }
  const FisheyeParamsd params = load_params(a.params);
  require_monotone(params, a.params.string());
  VirtualPinholed pinhole =
      default_pinhole(a.width.value_or(img.width()), a.height.value_or(img.height()), params.theta_max);
  if (a.focal) pinhole.f = *a.focal;
  const ImageBuffer rect = rectify_image(img, build_remap(params, pinhole, img.width(), img.height()));
  io::write_png(a.out, rect);
  io::write_mask_png(a.mask_out.value_or(with_suffix(a.out, "_mask.png")), rect.valid);
  return kOk;
}

// calibrate ------------------------------------------------------------

struct CalibrateArgs {
  fs::path observations;
  std::optional<fs::path> out;
  std::optional<int> width;
  std::optional<int> height;
  double gauge = 100.0;
  double theta_guess = 1.2;
  std::optional<double> focal;
  int max_iterations = LmOptions{}.max_iterations;
};

json result_to_json(const CalibResult& r, bool degenerate) {
  json j;
  j["params"] = io::params_to_json(r.params);
  j["rms_residual"] = r.rms_residual;
  j["line_rms"] = r.line_rms;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["warnings"] = r.warnings;
  j["degenerate"] = degenerate;
  return j;
}

int cmd_calibrate(const CalibrateArgs& a) {
  const json raw = io::read_json(a.observations);
  CalibProblem problem;
  problem.observations = io::read_observations(a.observations);
  const int w = a.width.value_or(raw.value("width", 0));
  const int h = a.height.value_or(raw.value("height", 0));
  if (w <= 0 || h <= 0) {
    throw io::ParseError(a.observations.string() + ": raster size unknown; pass --width and --height");
  }
  problem.width = w;
  problem.height = h;
  problem.gauge_mu = problem.gauge_mv = a.gauge;
  problem.initial = init_params(w, h, a.theta_guess, a.gauge);
  problem.pinhole = default_pinhole(w, h, problem.initial.theta_max);
  if (raw.contains("pinhole_f") && raw["pinhole_f"].is_number()) problem.pinhole.f = raw["pinhole_f"].get<double>();
  if (a.focal) problem.pinhole.f = *a.focal;
  problem.options.max_iterations = a.max_iterations;

  CalibResult result;
  try {
    result = estimate_params(problem);
  } catch (const DegenerateProblem& e) {
    result.params = problem.initial;
    result.warnings.emplace_back(e.what());
    write_output_json(a.out, result_to_json(result, true));
    throw ValidationError(std::string("calibrate: ") + e.what());
  }
  write_output_json(a.out, result_to_json(result, false));
  if (!result.converged) throw NotConverged("calibrate: iteration budget exhausted before convergence");
  return kOk;
}

// eval -----------------------------------------------------------------

struct EvalArgs {
  fs::path sample;
  fs::path params;
  std::optional<fs::path> out;
  int tolerance = 1;
};

json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

int cmd_eval(const EvalArgs& a) {
  const io::SampleRecord rec = io::read_sample_record(a.sample);
  const FisheyeParamsd est = load_params(a.params);
  require_monotone(est, a.params.string());
  require_monotone(rec.params, a.sample.string());
  const int w = rec.fisheye_image.width();
  const int h = rec.fisheye_image.height();

  const ImageBuffer rect_est = rectify_image(rec.fisheye_image, build_remap(est, rec.pinhole, w, h));
  const ImageBuffer rect_gt = rectify_image(rec.fisheye_image, build_remap(rec.params, rec.pinhole, w, h));
  const LineMap map_est = rectify_line_map(rec.line_map_distorted, build_remap(est, rec.pinhole, w, h));
  const PRResult pr = line_map_pr(map_est, rec.line_map_rectified, a.tolerance);

  const auto domain = rpe_domain(est, rec.params, w, h, &rec.fisheye_image.valid);
  if (domain.empty()) throw ValidationError("eval: no pixel is valid under both parameter sets");
  const RpeResult rpe = evaluate_rpe(est, rec.params, domain, rec.pinhole);

  json report;
  report["psnr"] = number_or_inf(psnr(rect_est, rect_gt));
  report["ssim"] = ssim(rect_est, rect_gt);
  report["rpe_mse"] = rpe.mse;
  report["rpe_rms"] = rpe.rms;
  report["precision"] = pr.precision;
  report["recall"] = pr.recall;
  report["f"] = pr.f_value;
  for (const auto& warn : pr.warnings) std::cerr << "warning: " << warn << "\n";
  // Kept out of the report so its keys stay fixed.
  const double coverage = static_cast<double>((rect_est.valid && rect_gt.valid).count()) / (w * h);
  std::cerr << "coverage: " << coverage << "\n";
  write_output_json(a.out, report);
  return kOk;
}

// losses-check ---------------------------------------------------------

struct LossesArgs {
  fs::path sample;
  fs::path params;
  std::optional<fs::path> out;
};

int cmd_losses_check(const LossesArgs& a) {
  const io::SampleRecord rec = io::read_sample_record(a.sample);
  const FisheyeParamsd est = load_params(a.params);
  require_monotone(est, a.params.string());
  const std::vector<Pixel> omega = positive_pixels(rec.line_map_distorted);
  if (omega.empty()) throw ValidationError("losses-check: distorted line map has no positive pixel");
  const LossBreakdown l = total_loss(ParamHeads::consensus(est), rec.params, omega, rec.pinhole);
  json j{{"total", l.total},
         {"global", l.global},
         {"local", l.local},
         {"curvature", l.curvature},
         {"omega_count", omega.size()}};
  write_output_json(a.out, j);
  return kOk;
}

const std::vector<std::string> kSubcommands = {"gen-dataset", "distort", "rectify",
                                                "calibrate", "eval", "losses-check"};

}  // namespace

int run(int argc, const char* const* argv) {
  std::string section;
  for (int i = 1; i < argc && section.empty(); ++i) {
    for (const auto& s : kSubcommands) {
      if (s == argv[i]) section = s;
    }
  }

  CLI::App app("Fisheye camera model toolkit: synthesis, rectification, plumb-line calibration, metrics.",
               "fisheye_cli");
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<ConfigJson>(section));
  app.set_config("--config", "", "JSON config; explicit flags take precedence");

  GenDatasetArgs gen;
  auto* s_gen = app.add_subcommand("gen-dataset", "Synthesize a fisheye dataset from annotated perspective images");
  s_gen->add_option("--annotations", gen.annotations, "annotation JSON files");
  s_gen->add_option("--synthetic", gen.synthetic, "number of procedural source scenes");
  s_gen->add_option("--out", gen.out, "output directory")->required();
  s_gen->add_option("--seed", gen.seed, "master seed")->capture_default_str();
  s_gen->add_option("--split", gen.split, "split name")->capture_default_str();
  gen.sampler.add(s_gen);

  DistortArgs dis;
  auto* s_dis = app.add_subcommand("distort", "Distort one perspective image");
  auto* dis_img = s_dis->add_option("--image", dis.image, "perspective PNG");
  auto* dis_ann = s_dis->add_option("--annotation", dis.annotation, "annotation JSON (image + segments)");
  dis_img->excludes(dis_ann);
  s_dis->add_option("--params", dis.params, "params JSON; sampled from --seed when absent");
  s_dis->add_option("--out", dis.out, "output PNG")->required();
  s_dis->add_option("--seed", dis.seed, "sampling seed")->capture_default_str();
  s_dis->add_option("--focal", dis.focal, "source pinhole focal (px)");
  dis.sampler.add(s_dis);

  RectifyArgs rec;
  auto* s_rec = app.add_subcommand("rectify", "Rectify a fisheye image");
  s_rec->add_option("--image", rec.image, "fisheye PNG")->required();
  s_rec->add_option("--params", rec.params, "params JSON")->required();
  s_rec->add_option("--out", rec.out, "output PNG")->required();
  s_rec->add_option("--mask-out", rec.mask_out, "validity mask PNG (default <out>_mask.png)");
  s_rec->add_option("--mask", rec.mask_in, "validity mask of the input");
  s_rec->add_option("--focal", rec.focal, "pinhole focal (px)");
  s_rec->add_option("--width", rec.width, "output width")->check(CLI::PositiveNumber);
  s_rec->add_option("--height", rec.height, "output height")->check(CLI::PositiveNumber);

  CalibrateArgs cal;
  auto* s_cal = app.add_subcommand("calibrate", "Estimate parameters from distorted line observations");
  s_cal->add_option("--observations", cal.observations, "sample record or {\"polylines\": ...} JSON")
      ->required();
  s_cal->add_option("--out", cal.out, "result JSON (stdout when absent)");
  s_cal->add_option("--width", cal.width, "raster width")->check(CLI::PositiveNumber);
  s_cal->add_option("--height", cal.height, "raster height")->check(CLI::PositiveNumber);
  s_cal->add_option("--gauge", cal.gauge, "fixed mu = mv")->capture_default_str()->check(CLI::PositiveNumber);
  s_cal->add_option("--theta-guess", cal.theta_guess, "angle at the half-diagonal for the initial guess")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  s_cal->add_option("--focal", cal.focal, "pinhole focal (px)");
  s_cal->add_option("--max-iterations", cal.max_iterations, "iteration budget")->capture_default_str();

  EvalArgs ev;
  auto* s_ev = app.add_subcommand("eval", "Score estimated parameters against a dataset sample");
  s_ev->add_option("--sample", ev.sample, "sample record JSON")->required();
  s_ev->add_option("--params", ev.params, "estimated params JSON")->required();
  s_ev->add_option("--out", ev.out, "report JSON (stdout when absent)");
  s_ev->add_option("--tolerance", ev.tolerance, "line-map match tolerance (px)")->capture_default_str();

  LossesArgs lo;
  auto* s_lo = app.add_subcommand("losses-check", "Training losses of consensus heads built from params");
  s_lo->add_option("--sample", lo.sample, "sample record JSON")->required();
  s_lo->add_option("--params", lo.params, "params JSON")->required();
  s_lo->add_option("--out", lo.out, "output JSON (stdout when absent)");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInputError;
  }

  try {
    if (s_gen->parsed()) return cmd_gen_dataset(gen);
    if (s_dis->parsed()) return cmd_distort(dis);
    if (s_rec->parsed()) return cmd_rectify(rec);
    if (s_cal->parsed()) return cmd_calibrate(cal);
    if (s_ev->parsed()) return cmd_eval(ev);
    if (s_lo->parsed()) return cmd_losses_check(lo);
  } catch (const NotConverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNotConverged;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const NonMonotoneError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const DegenerateProblem& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const OutOfRangeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const SamplerExhausted& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const io::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const io::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("fisheye_cli");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace fisheye::cli
