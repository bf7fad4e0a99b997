#include "reflectsim/estimator.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "reflectsim/csv.hpp"
#include "reflectsim/errors.hpp"
#include "reflectsim/parallel.hpp"

namespace reflectsim {

std::vector<double> Range::values() const {
  std::vector<double> v;
  const auto n = static_cast<long>(std::floor((max - min) / step + 1e-9));
  // snapped so refined grids reproduce the coarse nodes bit for bit
  for (long i = 0; i <= n; ++i) v.push_back(std::round((min + static_cast<double>(i) * step) * 1e9) / 1e9);
  return v;
}

void SweepGrid::validate() const {
  auto check = [](const Range& r, const char* name) {
    if (!(r.step > 0)) throw ValidationError(std::string("sweep grid: ") + name + " step must be positive");
    if (!(r.max >= r.min)) throw ValidationError(std::string("sweep grid: ") + name + " range is empty");
  };
  check(eps_real, "eps_real");
  check(eps_imag, "eps_imag");
  check(thickness, "thickness");
  if (eps_real.min < 1.0) throw ValidationError("sweep grid: eps_real below 1");
  if (eps_imag.min < 0.0) throw ValidationError("sweep grid: negative eps_imag");
  if (thickness.min < 0.0) throw ValidationError("sweep grid: negative thickness");
}

std::size_t SweepGrid::index(std::size_t it, std::size_t ir, std::size_t ii) const {
  return (it * eps_real.values().size() + ir) * eps_imag.values().size() + ii;
}

void MeasurementSet::validate() const {
  if (entries.empty()) throw ValidationError("measurement set has no focus points");
  if (cal == 0.0) throw ValidationError("measurement set: zero calibration amplitude");
}

std::vector<Vec3> MeasurementSet::focus_points() const {
  std::vector<Vec3> v;
  for (const auto& e : entries) v.push_back(e.focus);
  return v;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (...) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v)) {
    throw IoError("measurement file line " + std::to_string(line) + ": not a number: '" + s + "'");
  }
  return v;
}

}  // namespace

MeasurementSet read_measurements(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw IoError("measurement file is empty");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x_mm,y_mm,z_mm,re,im") throw IoError("measurement file line 1: unexpected header '" + line + "'");
  MeasurementSet m;
  bool have_cal = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split(line);
    const bool is_cal = f.size() == 6 && f[5] == "cal";
    if (f.size() != 5 && !is_cal) {
      throw IoError("measurement file line " + std::to_string(lineno) + ": expected 5 fields (or 6 ending in cal)");
    }
    double v[5];
    for (int i = 0; i < 5; ++i) v[i] = parse_number(f[i], lineno);
    if (is_cal) {
      if (have_cal) throw IoError("measurement file line " + std::to_string(lineno) + ": second calibration row");
      have_cal = true;
      m.cal_focus = {v[0], v[1], v[2]};
      m.cal = {v[3], v[4]};
    } else {
      m.entries.push_back({{v[0], v[1], v[2]}, {v[3], v[4]}});
    }
  }
  if (!have_cal) throw IoError("measurement file has no calibration row");
  return m;
}

MeasurementSet read_measurements(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open measurement file " + path);
  return read_measurements(f);
}

void write_measurements(std::ostream& out, const MeasurementSet& meas) {
  out << "x_mm,y_mm,z_mm,re,im\n";
  for (const auto& e : meas.entries) {
    out << num(e.focus.x) << ',' << num(e.focus.y) << ',' << num(e.focus.z) << ',' << num(e.value.real()) << ','
        << num(e.value.imag()) << '\n';
  }
  out << num(meas.cal_focus.x) << ',' << num(meas.cal_focus.y) << ',' << num(meas.cal_focus.z) << ','
      << num(meas.cal.real()) << ',' << num(meas.cal.imag()) << ",cal\n";
}

FocusGrid select_focus_points(const Vec3& center, int n, double dz) {
  if (n < 1 || n % 2 == 0) throw ValidationError("focus point count must be odd and positive");
  if (!(dz > 0)) throw ValidationError("focus spacing must be positive");
  FocusGrid g;
  for (int i = 1; i <= n; ++i) g.points.push_back({center.x, center.y, center.z + dz * (i - (n + 1) / 2.0)});
  return g;
}

FocusGrid select_focus_points(const ProfileImage& profile, int n, double dz) {
  if (profile.xs.empty() || profile.ys.empty() || profile.z_imaging.empty()) {
    throw ValidationError("profile image is empty");
  }
  const std::size_t ix = (profile.xs.size() - 1) / 2, iy = (profile.ys.size() - 1) / 2;
  return select_focus_points(Vec3{profile.xs[ix], profile.ys[iy], profile.z_at(ix, iy)}, n, dz);
}

double error_function(std::span<const cplx> pred, cplx pred_cal, const MeasurementSet& meas) {
  if (pred.size() != meas.entries.size()) throw ValidationError("error function: length mismatch");
  if (pred_cal == 0.0 || meas.cal == 0.0) throw ValidationError("error function: zero calibration amplitude");
  double f = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) f += std::abs(pred[i] / pred_cal - meas.entries[i].value / meas.cal);
  return f;
}

namespace {

cplx bare_plate(const Scene& scene, const Vec3& cal_focus, const GoOptions& go) {
  GoModel bare(scene, {go.spreading, 0.0});
  return bare.predict_received(cal_focus, kAir, 0.0);
}

void check_roi(const Scene& scene, std::span<const Vec3> pts) {
  for (const auto& p : pts) {
    const auto why = scene.roi.violation(p);
    if (!why.empty()) throw ValidationError("focus point outside the region of interest: " + why);
  }
}

}  // namespace

PredictionTable build_prediction_table(const Scene& scene, std::span<const Vec3> focus, const Vec3& cal_focus,
                                       const SweepGrid& grid, const EstimatorOptions& options) {
  grid.validate();
  if (focus.empty()) throw ValidationError("prediction table needs at least one focus point");
  check_roi(scene, focus);
  PredictionTable t;
  t.grid = grid;
  t.eps_real = grid.eps_real.values();
  t.eps_imag = grid.eps_imag.values();
  t.thickness = grid.thickness.values();
  t.focus.assign(focus.begin(), focus.end());
  t.cal_focus = cal_focus;
  t.calibration = bare_plate(scene, cal_focus, options.go);
  if (t.calibration == 0.0) throw NumericalError("bare-plate calibration prediction is zero");

  const GoModel go(scene, options.go);
  const std::size_t nf = focus.size(), nt = t.thickness.size(), nr = t.eps_real.size(), ni = t.eps_imag.size();
  std::vector<SweepRays> rays(nf);
  parallel_for(nf, options.workers, [&](std::size_t n) { rays[n] = go.trace_sweep(focus[n], t.thickness); });

  t.values.assign(t.nodes() * nf, cplx{});
  parallel_for(nr * ni, options.workers, [&](std::size_t e) {
    const std::size_t ir = e / ni, ii = e % ni;
    const ComplexPermittivity eps{t.eps_real[ir], t.eps_imag[ii]};
    for (std::size_t n = 0; n < nf; ++n) {
      const auto v = go.predict_sweep(rays[n], eps);
      for (std::size_t it = 0; it < nt; ++it) t.values[((it * nr + ir) * ni + ii) * nf + n] = v[it];
    }
  });
  return t;
}

EstimationResult estimate(const PredictionTable& table, const MeasurementSet& meas) {
  const auto start = std::chrono::steady_clock::now();
  meas.validate();
  const std::size_t nf = table.focus.size();
  if (meas.entries.size() != nf) throw ValidationError("measurement count does not match the prediction table");
  for (std::size_t n = 0; n < nf; ++n) {
    if (distance(meas.entries[n].focus, table.focus[n]) > 1e-6) {
      throw ValidationError("measurement focus points do not match the prediction table");
    }
  }
  EstimationResult r;
  r.grid = table.grid;
  r.surface.resize(table.nodes());
  std::vector<cplx> meas_norm(nf);
  for (std::size_t n = 0; n < nf; ++n) meas_norm[n] = meas.entries[n].value / meas.cal;
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_node = 0;
  for (std::size_t node = 0; node < table.nodes(); ++node) {
    double f = 0;
    for (std::size_t n = 0; n < nf; ++n) f += std::abs(table.values[node * nf + n] / table.calibration - meas_norm[n]);
    r.surface[node] = f;
    if (f < best) {
      best = f;
      best_node = node;
    }
  }
  const std::size_t nr = table.eps_real.size(), ni = table.eps_imag.size();
  r.argmin = {best_node / (nr * ni), (best_node / ni) % nr, best_node % ni};
  r.eps = {table.eps_real[r.argmin[1]], table.eps_imag[r.argmin[2]]};
  r.thickness = table.thickness[r.argmin[0]];
  r.min_error = best;
  r.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

EstimationResult estimate(const Scene& scene, const MeasurementSet& meas, const SweepGrid& grid,
                          const EstimatorOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  meas.validate();
  const auto focus = meas.focus_points();
  auto r = estimate(build_prediction_table(scene, focus, meas.cal_focus, grid, options), meas);
  r.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

BatchStatistics estimate_batch(const Scene& scene, std::span<const MeasurementSet> runs, const SweepGrid& grid,
                               const EstimatorOptions& options) {
  if (runs.size() < 2) throw ValidationError("batch estimation needs at least two runs");
  const auto focus = runs[0].focus_points();
  for (const auto& m : runs) {
    m.validate();
    if (m.entries.size() != focus.size() || distance(m.cal_focus, runs[0].cal_focus) > 1e-6) {
      throw ValidationError("batch runs must share focus points");
    }
  }
  const auto table = build_prediction_table(scene, focus, runs[0].cal_focus, grid, options);
  BatchStatistics b;
  for (const auto& m : runs) b.runs.push_back(estimate(table, m));
  const double n = static_cast<double>(b.runs.size());
  auto param = [](const EstimationResult& r, int k) {
    return k == 0 ? r.eps.eps_real : k == 1 ? r.eps.eps_imag : r.thickness;
  };
  for (int k = 0; k < 3; ++k) {
    const double x0 = param(b.runs[0], k);
    double s = 0;
    for (const auto& r : b.runs) s += param(r, k) - x0;
    b.mean[k] = x0 + s / n;
    double ss = 0;
    for (const auto& r : b.runs) ss += (param(r, k) - b.mean[k]) * (param(r, k) - b.mean[k]);
    b.std[k] = std::sqrt(ss / (n - 1.0));
  }
  return b;
}

MeasurementSet synthesize_measurement(const Scene& scene, std::span<const Vec3> focus, const Vec3& cal_focus,
                                      ComplexPermittivity eps, double thickness, const GoOptions& go) {
  validate(eps);
  const GoModel model(scene, go);
  MeasurementSet m;
  for (const auto& f : focus) m.entries.push_back({f, model.predict_received(f, eps, thickness)});
  m.cal_focus = cal_focus;
  m.cal = bare_plate(scene, cal_focus, go);
  return m;
}

MeasurementSet add_noise(const MeasurementSet& meas, double snr_db, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const double rel = std::pow(10.0, -snr_db / 20.0) / std::sqrt(2.0);
  auto noisy = [&](cplx v) {
    const double s = std::abs(v) * rel;
    const double re = normal(rng), im = normal(rng);
    return v + cplx{s * re, s * im};
  };
  MeasurementSet out = meas;
  for (auto& e : out.entries) e.value = noisy(e.value);
  out.cal = noisy(out.cal);
  return out;
}

void write_error_surface_csv(std::ostream& out, const EstimationResult& r) {
  const auto er = r.grid.eps_real.values(), ei = r.grid.eps_imag.values(), ts = r.grid.thickness.values();
  out << "eps_real,eps_imag,T_mm,f\n";
  std::size_t node = 0;
  for (double t : ts) {
    for (double a : er) {
      for (double b : ei) {
        out << num(a) << ',' << num(b) << ',' << num(t) << ',' << num(r.surface[node++]) << '\n';
      }
    }
  }
}

std::string result_json(const EstimationResult& r) {
  auto range = [](const Range& x) { return nlohmann::ordered_json{{"min", x.min}, {"max", x.max}, {"step", x.step}}; };
  nlohmann::ordered_json j;
  j["estimate"] = {{"eps_real", r.eps.eps_real}, {"eps_imag", r.eps.eps_imag}, {"thickness_mm", r.thickness}};
  j["min_error"] = r.min_error;
  j["grid_spec"] = {{"eps_real", range(r.grid.eps_real)},
                    {"eps_imag", range(r.grid.eps_imag)},
                    {"thickness_mm", range(r.grid.thickness)}};
  j["runtime_ms"] = std::round(r.runtime_ms);
  return j.dump(2) + "\n";
}

}  // namespace reflectsim
