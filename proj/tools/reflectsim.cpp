// reflectsim command-line front end.
//
// Exit codes: 0 ok, 1 validation error, 2 I/O error, 3 numerical failure.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "reflectsim/csv.hpp"
#include "reflectsim/errors.hpp"
#include "reflectsim/estimator.hpp"
#include "reflectsim/go_forward.hpp"
#include "reflectsim/parallel.hpp"
#include "reflectsim/po_imager.hpp"
#include "reflectsim/scene.hpp"

namespace fs = std::filesystem;
using namespace reflectsim;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Common {
  std::string config_path;
  std::string out_dir{"out"};
  std::size_t workers{0};
  std::uint64_t seed{0};
  std::string scale{"reduced"};
  int k_order{3};
  double dz{10.0};
};

// Flags the user actually passed, recorded verbatim in the manifest.
std::map<std::string, std::string> collect_overrides(const CLI::App& sub) {
  std::map<std::string, std::string> out;
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->count() == 0 || opt->get_name() == "--help") continue;
    std::string v;
    for (const auto& r : opt->results()) v += (v.empty() ? "" : " ") + r;
    out[opt->get_name()] = v.empty() ? "true" : v;
  }
  return out;
}

class OutputDir {
 public:
  OutputDir(std::string cmd, const Common& c, const SceneConfig& config,
            std::map<std::string, std::string> overrides)
      : dir_(c.out_dir), cmd_(std::move(cmd)), config_path_(c.config_path), hash_(scene_hash(config)),
        overrides_(std::move(overrides)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec || !fs::is_directory(dir_)) throw IoError("cannot create output directory '" + dir_.string() + "'");
  }

  const std::string& hash() const { return hash_; }

  void write(const std::string& name, const std::string& content) {
    put(name, content);
    files_.push_back(name);
  }

  void finish() {
    nlohmann::ordered_json m;
    m["command"] = cmd_;
    m["config"] = config_path_.empty() ? "(built-in default)" : config_path_;
    m["output_dir"] = dir_.string();
    m["overrides"] = overrides_;
    m["scene_hash"] = hash_;
    m["tool_version"] = kVersion;
    m["files"] = files_;
    put("manifest.json", m.dump(2) + "\n");
  }

 private:
  // Write through a temporary so a crash never leaves a half-written file.
  void put(const std::string& name, const std::string& content) {
    const fs::path final_path = dir_ / name;
    const fs::path tmp = dir_ / (name + ".tmp");
    {
      std::ofstream f(tmp, std::ios::binary);
      if (!f) throw IoError("cannot open '" + tmp.string() + "' for writing");
      f << content;
      if (!f) throw IoError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, final_path, ec);
    if (ec) throw IoError("cannot rename '" + tmp.string() + "': " + ec.message());
  }

  fs::path dir_;
  std::string cmd_, config_path_, hash_;
  std::map<std::string, std::string> overrides_;
  std::vector<std::string> files_;
};

std::size_t resolve_workers(std::size_t flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("REFLECTSIM_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v <= 0) throw ValidationError("REFLECTSIM_WORKERS must be a positive integer");
    return static_cast<std::size_t>(v);
  }
  return default_workers();
}

SceneConfig load_config(const Common& c, bool scale_given) {
  const Scale scale = c.scale == "full" ? Scale::Full : Scale::Reduced;
  if (c.config_path.empty()) return default_config(scale);
  SceneConfig config = load_scene_config(c.config_path);
  if (scale_given) config = with_array_side(config, default_config(scale).faras.front().side_mm);
  return config;
}

Vec3 parse_point(const std::string& s, const char* what) {
  Vec3 p;
  char c1 = 0, c2 = 0;
  std::istringstream in(s);
  in.imbue(std::locale::classic());
  if (!(in >> p.x >> c1 >> p.y >> c2 >> p.z) || c1 != ',' || c2 != ',' || !(in >> std::ws).eof())
    throw ValidationError(std::string(what) + ": expected x,y,z in mm, got '" + s + "'");
  return p;
}

Range parse_range(const std::string& s, const char* what) {
  Range r;
  char c1 = 0, c2 = 0;
  std::istringstream in(s);
  in.imbue(std::locale::classic());
  if (!(in >> r.min >> c1 >> r.max >> c2 >> r.step) || c1 != ':' || c2 != ':' || !(in >> std::ws).eof())
    throw ValidationError(std::string(what) + ": expected min:max:step, got '" + s + "'");
  return r;
}

std::vector<double> z_samples(double z_min, double z_max, double dz) {
  if (!(dz > 0)) throw ValidationError("dz must be > 0");
  if (!(z_max >= z_min)) throw ValidationError("z range: max must be >= min");
  std::vector<double> zs;
  const auto n = static_cast<std::size_t>(std::floor((z_max - z_min) / dz + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) zs.push_back(z_min + dz * static_cast<double>(i));
  return zs;
}

Vec3 target_xy(const SceneConfig& c) {
  if (c.target) return {c.target->center[0], c.target->center[1], c.z_bg_mm};
  if (c.plate_center_mm) return {(*c.plate_center_mm)[0], (*c.plate_center_mm)[1], c.z_bg_mm};
  return {Plate{}.center_x, Plate{}.center_y, c.z_bg_mm};
}

struct ObjectSpec {
  ComplexPermittivity eps;
  double thickness{0}, gap{0};
};

ObjectSpec named_object(const std::string& name) {
  if (name == "object1") return {{8.0, 0.0}, 20.0, 0.0};
  if (name == "object2") return {{2.0, 0.0}, 40.0, 0.0};
  if (name == "object3") return {{4.0, 0.2}, 40.0, 0.0};
  if (name == "pa66") return {{3.0, 0.01}, 37.0, 1.0};
  throw ValidationError("unknown synthetic object '" + name + "' (object1|object2|object3|pa66)");
}

std::string measurements_text(const MeasurementSet& m) {
  std::ostringstream s;
  write_measurements(s, m);
  return s.str();
}

// ---- subcommands ----------------------------------------------------------

struct PsfArgs {
  std::string focus;
  double half_extent{0}, step{0};
  bool volume{false};
};

void cmd_psf(const Common& c, const PsfArgs& a, const SceneConfig& config, OutputDir& out) {
  Scene scene = build_scene(config);
  const Vec3 focus = a.focus.empty() ? Vec3{target_xy(config).x, target_xy(config).y, config.z_bg_mm - 20.0}
                                     : parse_point(a.focus, "--focus");
  if (const auto v = scene.roi.violation(focus); !v.empty()) throw ValidationError("focus outside RoI: " + v);
  PoImager imager(std::move(scene), {c.k_order, c.workers});
  PsfSpec spec;
  spec.half_extent = a.half_extent;
  spec.step = a.step;
  spec.volume = a.volume;
  const PsfResult r = imager.psf(focus, spec);
  std::ostringstream csv;
  write_psf_csv(csv, r);
  out.write("psf.csv", csv.str());

  nlohmann::ordered_json j;
  j["focus_mm"] = {r.focus.x, r.focus.y, r.focus.z};
  j["lambda0_mm"] = imager.scene().constants.wavelength;
  j["width_one_way_mm"] = {r.width_one_way[0], r.width_one_way[1], r.width_one_way[2]};
  j["width_two_way_mm"] = {r.width_two_way[0], r.width_two_way[1], r.width_two_way[2]};
  out.write("psf_summary.json", j.dump(2) + "\n");
}

struct ImageArgs {
  std::string xs, ys;
  std::optional<double> z_min, z_max;
};

void cmd_image(const Common& c, const ImageArgs& a, const SceneConfig& config, OutputDir& out) {
  const Vec3 centre = target_xy(config);
  const std::vector<double> xs = a.xs.empty() ? std::vector<double>{centre.x} : parse_range(a.xs, "--x-range").values();
  const std::vector<double> ys = a.ys.empty() ? std::vector<double>{centre.y} : parse_range(a.ys, "--y-range").values();
  const double z_min = a.z_min.value_or(config.z_bg_mm - 100.0);
  const double z_max = a.z_max.value_or(config.z_bg_mm + 20.0);
  PoImager imager(build_scene(config), {c.k_order, c.workers});
  const ProfileImage img = imager.reconstruct_profile(xs, ys, z_min, z_max, c.dz);
  std::ostringstream csv;
  write_profile_csv(csv, img);
  out.write("profile.csv", csv.str());
  out.write("profile.json", profile_metadata_json(img, out.hash(), c.k_order, c.dz));
}

struct PredictArgs {
  double eps_real{3.0}, eps_imag{0.0}, thickness{37.0}, gap{0.0};
  std::optional<double> z_min, z_max;
  std::string spreading{"verbatim"};
};

GoOptions go_options(const std::string& spreading, double gap) {
  GoOptions o;
  o.spreading = spreading == "cumulative" ? Spreading::Cumulative : Spreading::Verbatim;
  o.gap_mm = gap;
  return o;
}

void cmd_predict(const Common& c, const PredictArgs& a, const SceneConfig& config, OutputDir& out) {
  const Scene scene = build_scene(without_target(config));
  GoModel go(scene, go_options(a.spreading, a.gap));
  const Vec3 centre = target_xy(config);
  const auto zs = z_samples(a.z_min.value_or(config.z_bg_mm - 100.0), a.z_max.value_or(config.z_bg_mm - 1.0), c.dz);
  std::vector<cplx> values;
  for (double z : zs) {
    const Vec3 f{centre.x, centre.y, z};
    if (const auto v = scene.roi.violation(f); !v.empty()) throw ValidationError("focus outside RoI: " + v);
    values.push_back(go.predict_received(f, {a.eps_real, a.eps_imag}, a.thickness));
  }
  std::ostringstream csv;
  write_trace_csv(csv, zs, values);
  out.write("trace.csv", csv.str());
}

struct EstimateArgs {
  std::string measurements, synthetic, synthetic_model{"auto"};
  std::optional<double> snr_db;
  std::string eps_real{"2:10:0.25"}, eps_imag{"0:0.5:0.05"}, thickness{"0:60:1"};
  int n_focus{3};
  double gap{0.0};
  std::string spreading{"verbatim"};
  std::optional<double> z_min, z_max;
};

MeasurementSet synthesize(const Common& c, const EstimateArgs& a, const SceneConfig& config, double& model_gap) {
  const ObjectSpec obj = named_object(a.synthetic);
  const Vec3 centre = target_xy(config);
  const Vec3 cal_focus = centre;
  std::string model = a.synthetic_model;
  if (model == "auto") model = obj.gap > 0 ? "go" : "po";
  model_gap = obj.gap;

  MeasurementSet m;
  m.cal_focus = cal_focus;
  if (model == "po") {
    if (obj.gap > 0) throw ValidationError("the PO imager models slabs in contact with the plate; use --synthetic-model go");
    PoImager target(build_scene(with_target(config, obj.eps, obj.thickness)), {c.k_order, c.workers});
    const ProfileImage img = target.reconstruct_profile({centre.x}, {centre.y},
                                                        a.z_min.value_or(config.z_bg_mm - 100.0),
                                                        a.z_max.value_or(config.z_bg_mm + 20.0), c.dz);
    const FocusGrid fg = select_focus_points(img, a.n_focus, c.dz);
    for (const Vec3& f : fg.points) m.entries.push_back({f, target.run_focus(f).total});
    PoImager bare(build_scene(without_target(config)), {c.k_order, c.workers});
    m.cal = bare.run_focus(cal_focus).total;
  } else {
    // GO has no imaging step: centre the stencil on the true front face, on the dz lattice.
    const double front = config.z_bg_mm - obj.gap - obj.thickness;
    const double zc = config.z_bg_mm - c.dz * std::round((config.z_bg_mm - front) / c.dz);
    const FocusGrid fg = select_focus_points(Vec3{centre.x, centre.y, zc}, a.n_focus, c.dz);
    m = synthesize_measurement(build_scene(without_target(config)), fg.points, cal_focus, obj.eps, obj.thickness,
                               go_options(a.spreading, obj.gap));
  }
  if (a.snr_db) m = add_noise(m, *a.snr_db, c.seed);
  return m;
}

void cmd_estimate(const Common& c, const EstimateArgs& a, const SceneConfig& config, OutputDir& out) {
  if (a.measurements.empty() == a.synthetic.empty())
    throw ValidationError("estimate needs exactly one of --measurements or --synthetic");
  if (a.snr_db && a.synthetic.empty()) throw ValidationError("--noise-snr-db only applies to --synthetic");
  if (a.synthetic_model != "auto" && a.synthetic_model != "po" && a.synthetic_model != "go")
    throw ValidationError("--synthetic-model must be auto, po or go");

  SweepGrid grid;
  grid.eps_real = parse_range(a.eps_real, "--eps-real");
  grid.eps_imag = parse_range(a.eps_imag, "--eps-imag");
  grid.thickness = parse_range(a.thickness, "--thickness");
  grid.validate();

  double gap = a.gap;
  MeasurementSet m;
  if (!a.synthetic.empty()) {
    m = synthesize(c, a, config, gap);
    out.write("measurements.csv", measurements_text(m));
  } else {
    m = read_measurements(a.measurements);
  }

  EstimatorOptions opts;
  opts.go = go_options(a.spreading, gap);
  opts.workers = c.workers;
  const EstimationResult r = estimate(build_scene(without_target(config)), m, grid, opts);

  out.write("result.json", result_json(r) + "\n");
  std::ostringstream surf;
  write_error_surface_csv(surf, r);
  out.write("error_surface.csv", surf.str());
  std::printf("estimate: eps' %s  eps'' %s  T %s mm  f* %s\n", num(r.eps.eps_real).c_str(),
              num(r.eps.eps_imag).c_str(), num(r.thickness).c_str(), num(r.min_error).c_str());
}

void cmd_calibrate(const Common& c, const std::string& focus_arg, const SceneConfig& config, OutputDir& out) {
  const Scene bare = build_scene(without_target(config));
  const Vec3 focus = focus_arg.empty() ? target_xy(config) : parse_point(focus_arg, "--focus");
  if (const auto v = bare.roi.violation(focus); !v.empty()) throw ValidationError("focus outside RoI: " + v);
  PoImager imager(bare, {c.k_order, c.workers});
  const cplx e0 = imager.run_focus(focus).total;
  std::ostringstream s;
  s << "x_mm,y_mm,z_mm,re,im\n"
    << num(focus.x) << ',' << num(focus.y) << ',' << num(focus.z) << ',' << num(e0.real()) << ','
    << num(e0.imag()) << ",cal\n";
  out.write("calibration.csv", s.str());
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "scene JSON file (default: built-in geometry)");
  sub->add_option("--out", c.out_dir, "output directory");
  sub->add_option("--workers", c.workers, "worker threads (0: REFLECTSIM_WORKERS or all cores)");
  sub->add_option("--seed", c.seed, "noise seed");
  sub->add_option("--scale", c.scale, "array size")->check(CLI::IsMember({"full", "reduced"}));
  sub->add_option("--k-order", c.k_order, "PO bounce order")->check(CLI::Range(1, 16));
  sub->add_option("--dz-mm", c.dz, "focal step along z");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reflectarray near-field imaging and permittivity estimation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Common common;
  PsfArgs psf;
  ImageArgs image;
  PredictArgs predict;
  EstimateArgs est;
  std::string cal_focus;

  auto* s_psf = app.add_subcommand("psf", "focal-spot fields around one focus");
  add_common(s_psf, common);
  s_psf->add_option("--focus", psf.focus, "x,y,z in mm");
  s_psf->add_option("--half-extent-mm", psf.half_extent, "cut half length (default 3 lambda0)");
  s_psf->add_option("--step-mm", psf.step, "cut sample step (default lambda0/10)");
  s_psf->add_flag("--volume", psf.volume, "sample the full 3-D box");

  auto* s_image = app.add_subcommand("image", "profile reconstruction by focal scanning");
  add_common(s_image, common);
  s_image->add_option("--x-range", image.xs, "min:max:step pixel x (default target centre)");
  s_image->add_option("--y-range", image.ys, "min:max:step pixel y");
  s_image->add_option("--z-min", image.z_min);
  s_image->add_option("--z-max", image.z_max);

  auto* s_predict = app.add_subcommand("predict", "ray-model received field along z");
  add_common(s_predict, common);
  s_predict->add_option("--eps-real", predict.eps_real);
  s_predict->add_option("--eps-imag", predict.eps_imag, "loss, eps = eps' - j eps''");
  s_predict->add_option("--thickness-mm", predict.thickness);
  s_predict->add_option("--gap-mm", predict.gap);
  s_predict->add_option("--z-min", predict.z_min);
  s_predict->add_option("--z-max", predict.z_max);
  s_predict->add_option("--spreading", predict.spreading)->check(CLI::IsMember({"verbatim", "cumulative"}));

  auto* s_est = app.add_subcommand("estimate", "grid-search permittivity and thickness");
  add_common(s_est, common);
  s_est->add_option("--measurements", est.measurements, "CSV x_mm,y_mm,z_mm,re,im with one ',cal' row");
  s_est->add_option("--synthetic", est.synthetic, "object1|object2|object3|pa66");
  s_est->add_option("--synthetic-model", est.synthetic_model, "auto|po|go");
  s_est->add_option("--noise-snr-db", est.snr_db);
  s_est->add_option("--eps-real", est.eps_real, "min:max:step");
  s_est->add_option("--eps-imag", est.eps_imag, "min:max:step");
  s_est->add_option("--thickness", est.thickness, "min:max:step in mm");
  s_est->add_option("--n-focus", est.n_focus, "focus points (odd)");
  s_est->add_option("--gap-mm", est.gap, "model air gap for measured data");
  s_est->add_option("--spreading", est.spreading)->check(CLI::IsMember({"verbatim", "cumulative"}));
  s_est->add_option("--z-min", est.z_min);
  s_est->add_option("--z-max", est.z_max);

  auto* s_cal = app.add_subcommand("calibrate", "bare-plate reference field");
  add_common(s_cal, common);
  s_cal->add_option("--focus", cal_focus, "x,y,z in mm (default plate centre at z_bg)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    common.workers = resolve_workers(common.workers);
    if (!(common.dz > 0)) throw ValidationError("--dz-mm must be > 0");
    const SceneConfig config = load_config(common, sub->count("--scale") > 0);
    build_scene(config);  // validate before creating the output directory
    OutputDir out(sub->get_name(), common, config, collect_overrides(*sub));

    const std::string name = sub->get_name();
    if (name == "psf") cmd_psf(common, psf, config, out);
    else if (name == "image") cmd_image(common, image, config, out);
    else if (name == "predict") cmd_predict(common, predict, config, out);
    else if (name == "estimate") cmd_estimate(common, est, config, out);
    else cmd_calibrate(common, cal_focus, config, out);
    out.finish();
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 1;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
