#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "reflectsim/em_kernels.hpp"
#include "reflectsim/errors.hpp"
#include "reflectsim/estimator.hpp"
#include "reflectsim/go_forward.hpp"
#include "reflectsim/po_imager.hpp"
#include "reflectsim/reflectarray.hpp"
#include "reflectsim/scene.hpp"

namespace py = pybind11;
using namespace reflectsim;

namespace {

using Points = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Values = py::array_t<cplx, py::array::c_style | py::array::forcecast>;

std::vector<Vec3> to_points(const Points& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw ValidationError("points must have shape (n, 3)");
  std::vector<Vec3> out(static_cast<std::size_t>(a.shape(0)));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[static_cast<std::size_t>(i)] = {r(i, 0), r(i, 1), r(i, 2)};
  return out;
}

Vec3 to_point(const std::array<double, 3>& p) { return {p[0], p[1], p[2]}; }

Values to_array(const std::vector<cplx>& v) {
  Values out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<double> to_array(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Scale parse_scale(const std::string& s) {
  if (s == "full") return Scale::Full;
  if (s == "reduced") return Scale::Reduced;
  throw ValidationError("scale must be 'full' or 'reduced'");
}

GoOptions go_options(double gap, const std::string& spreading) {
  GoOptions o;
  o.gap_mm = gap;
  if (spreading == "cumulative") o.spreading = Spreading::Cumulative;
  else if (spreading != "verbatim") throw ValidationError("spreading must be 'verbatim' or 'cumulative'");
  return o;
}

SweepGrid make_grid(const std::array<double, 3>& er, const std::array<double, 3>& ei, const std::array<double, 3>& t) {
  SweepGrid g;
  g.eps_real = {er[0], er[1], er[2]};
  g.eps_imag = {ei[0], ei[1], ei[2]};
  g.thickness = {t[0], t[1], t[2]};
  return g;
}

MeasurementSet make_measurements(const Points& focus, const Values& values, const std::array<double, 3>& cal_focus,
                                 cplx cal) {
  const auto pts = to_points(focus);
  if (values.ndim() != 1 || static_cast<std::size_t>(values.shape(0)) != pts.size())
    throw ValidationError("values must be 1-D with one entry per focus point");
  MeasurementSet m;
  for (std::size_t i = 0; i < pts.size(); ++i) m.entries.push_back({pts[i], values.data()[i]});
  m.cal_focus = to_point(cal_focus);
  m.cal = cal;
  return m;
}

py::dict result_dict(const EstimationResult& r) {
  py::dict d;
  d["eps_real"] = r.eps.eps_real;
  d["eps_imag"] = r.eps.eps_imag;
  d["thickness_mm"] = r.thickness;
  d["min_error"] = r.min_error;
  const auto nt = r.grid.thickness.values().size(), nr = r.grid.eps_real.values().size(),
             ni = r.grid.eps_imag.values().size();
  py::array_t<double> surf({nt, nr, ni});
  std::copy(r.surface.begin(), r.surface.end(), surf.mutable_data());
  d["surface"] = surf;  // [T, eps', eps'']
  d["runtime_ms"] = r.runtime_ms;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "reflectarray near-field imaging: PO forward model, ray model and permittivity estimation";

  static py::exception<ValidationError> validation(m, "ValidationError", PyExc_ValueError);
  static py::exception<IoError> io(m, "IoError", PyExc_OSError);
  static py::exception<NumericalError> numerical(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ValidationError& e) {
      validation(e.what());
    } catch (const IoError& e) {
      io(e.what());
    } catch (const NumericalError& e) {
      numerical(e.what());
    }
  });

  // scene configuration travels as JSON text
  m.def(
      "default_config",
      [](const std::string& scale) { return serialize(default_config(parse_scale(scale))); },
      py::arg("scale") = "reduced");
  m.def(
      "with_target",
      [](const std::string& config, double eps_real, double eps_imag, double thickness, double gap) {
        return serialize(with_target(parse_scene_config(config), {eps_real, eps_imag}, thickness, gap));
      },
      py::arg("config"), py::arg("eps_real"), py::arg("eps_imag"), py::arg("thickness_mm"), py::arg("gap_mm") = 0.0);
  m.def(
      "without_target", [](const std::string& config) { return serialize(without_target(parse_scene_config(config))); },
      py::arg("config"));
  m.def(
      "scene_hash", [](const std::string& config) { return scene_hash(parse_scene_config(config)); },
      py::arg("config"));

  m.def(
      "fresnel",
      [](double theta, cplx eps1, cplx eps2) {
        const auto r = fresnel(theta, {eps1.real(), -eps1.imag()}, {eps2.real(), -eps2.imag()});
        return std::make_pair(r.te, r.tm);
      },
      py::arg("theta"), py::arg("eps1"), py::arg("eps2"),
      "(te, tm) interface reflection; eps as complex eps' - j eps''");
  m.def(
      "slab_reflection",
      [](double eps_real, double eps_imag, double thickness, double theta, const std::string& mode, double gap,
         double frequency_ghz) {
        if (mode != "te" && mode != "tm") throw ValidationError("mode must be 'te' or 'tm'");
        return tl_reflection(TLStack::slab_on_conductor({eps_real, eps_imag}, thickness, gap), theta,
                             mode == "te" ? Mode::TE : Mode::TM, PhysicalConstants::at(frequency_ghz).k0);
      },
      py::arg("eps_real"), py::arg("eps_imag"), py::arg("thickness_mm"), py::arg("theta"), py::arg("mode") = "te",
      py::arg("gap_mm") = 0.0, py::arg("frequency_ghz") = 24.16);
  m.def("needs_flip", &needs_flip, py::arg("path_phase"));

  m.def(
      "go_predict",
      [](const std::string& config, const Points& focus, double eps_real, double eps_imag, double thickness,
         double gap, const std::string& spreading) {
        const Scene scene = build_scene(without_target(parse_scene_config(config)));
        const GoModel go(scene, go_options(gap, spreading));
        std::vector<cplx> out;
        for (const Vec3& f : to_points(focus)) out.push_back(go.predict_received(f, {eps_real, eps_imag}, thickness));
        return to_array(out);
      },
      py::arg("config"), py::arg("focus"), py::arg("eps_real"), py::arg("eps_imag"), py::arg("thickness_mm"),
      py::arg("gap_mm") = 0.0, py::arg("spreading") = "verbatim");

  m.def(
      "po_received",
      [](const std::string& config, const Points& focus, int k_order, std::size_t workers) {
        const auto pts = to_points(focus);
        std::vector<cplx> total;
        {
          py::gil_scoped_release nogil;
          PoImager im(build_scene(parse_scene_config(config)), {k_order, workers});
          total = im.simulate_received(pts).total;
        }
        return to_array(total);
      },
      py::arg("config"), py::arg("focus"), py::arg("k_order") = 3, py::arg("workers") = 0);

  m.def(
      "psf",
      [](const std::string& config, const std::array<double, 3>& focus, double half_extent, double step) {
        PsfSpec spec;
        spec.half_extent = half_extent;
        spec.step = step;
        PsfResult r;
        {
          py::gil_scoped_release nogil;
          PoImager im(build_scene(parse_scene_config(config)));
          r = im.psf(to_point(focus), spec);
        }
        py::dict d;
        d["offsets"] = to_array(r.offsets);
        for (int a = 0; a < 3; ++a) {
          std::vector<double> mag;
          for (const auto& e : r.cut[a]) mag.push_back(e.norm());
          d[py::str(std::string("abs_") + "xyz"[a])] = to_array(mag);
        }
        d["width_one_way"] = std::vector<double>(r.width_one_way, r.width_one_way + 3);
        d["width_two_way"] = std::vector<double>(r.width_two_way, r.width_two_way + 3);
        return d;
      },
      py::arg("config"), py::arg("focus"), py::arg("half_extent_mm") = 0.0, py::arg("step_mm") = 0.0);

  m.def(
      "reconstruct_profile",
      [](const std::string& config, std::vector<double> xs, std::vector<double> ys, double z_min, double z_max,
         double dz, int k_order) {
        ProfileImage img;
        {
          py::gil_scoped_release nogil;
          PoImager im(build_scene(parse_scene_config(config)), {k_order, 0});
          img = im.reconstruct_profile(std::move(xs), std::move(ys), z_min, z_max, dz);
        }
        py::array_t<double> z({img.ys.size(), img.xs.size()});
        std::copy(img.z_imaging.begin(), img.z_imaging.end(), z.mutable_data());
        py::dict d;
        d["xs"] = to_array(img.xs);
        d["ys"] = to_array(img.ys);
        d["zs"] = to_array(img.zs);
        d["z_imaging"] = z;
        return d;
      },
      py::arg("config"), py::arg("xs"), py::arg("ys"), py::arg("z_min"), py::arg("z_max"), py::arg("dz") = 10.0,
      py::arg("k_order") = 3);

  m.def(
      "focus_stencil",
      [](const std::array<double, 3>& centre, int n, double dz) {
        const auto pts = select_focus_points(to_point(centre), n, dz).points;
        py::array_t<double> out({pts.size(), std::size_t{3}});
        auto w = out.mutable_unchecked<2>();
        for (std::size_t i = 0; i < pts.size(); ++i) {
          w(i, 0) = pts[i].x;
          w(i, 1) = pts[i].y;
          w(i, 2) = pts[i].z;
        }
        return out;
      },
      py::arg("centre"), py::arg("n") = 3, py::arg("dz") = 10.0);

  m.def(
      "synthesize",
      [](const std::string& config, const Points& focus, const std::array<double, 3>& cal_focus, double eps_real,
         double eps_imag, double thickness, double gap) {
        const auto meas = synthesize_measurement(build_scene(without_target(parse_scene_config(config))),
                                                 to_points(focus), to_point(cal_focus), {eps_real, eps_imag},
                                                 thickness, go_options(gap, "verbatim"));
        std::vector<cplx> v;
        for (const auto& e : meas.entries) v.push_back(e.value);
        return std::make_pair(to_array(v), meas.cal);
      },
      py::arg("config"), py::arg("focus"), py::arg("cal_focus"), py::arg("eps_real"), py::arg("eps_imag"),
      py::arg("thickness_mm"), py::arg("gap_mm") = 0.0, "noise-free ray-model measurement: (values, cal)");

  m.def(
      "add_noise",
      [](const Points& focus, const Values& values, const std::array<double, 3>& cal_focus, cplx cal, double snr_db,
         std::uint64_t seed) {
        const auto noisy = add_noise(make_measurements(focus, values, cal_focus, cal), snr_db, seed);
        std::vector<cplx> v;
        for (const auto& e : noisy.entries) v.push_back(e.value);
        return std::make_pair(to_array(v), noisy.cal);
      },
      py::arg("focus"), py::arg("values"), py::arg("cal_focus"), py::arg("cal"), py::arg("snr_db"),
      py::arg("seed") = 0);

  m.def(
      "estimate",
      [](const std::string& config, const Points& focus, const Values& values, const std::array<double, 3>& cal_focus,
         cplx cal, const std::array<double, 3>& eps_real, const std::array<double, 3>& eps_imag,
         const std::array<double, 3>& thickness, double gap, std::size_t workers) {
        const auto meas = make_measurements(focus, values, cal_focus, cal);
        const SweepGrid grid = make_grid(eps_real, eps_imag, thickness);
        EstimationResult r;
        {
          py::gil_scoped_release nogil;
          r = estimate(build_scene(without_target(parse_scene_config(config))), meas, grid,
                       {go_options(gap, "verbatim"), workers});
        }
        return result_dict(r);
      },
      py::arg("config"), py::arg("focus"), py::arg("values"), py::arg("cal_focus"), py::arg("cal"),
      py::arg("eps_real") = std::array<double, 3>{2, 10, 0.25},
      py::arg("eps_imag") = std::array<double, 3>{0, 0.5, 0.05},
      py::arg("thickness_mm") = std::array<double, 3>{0, 60, 1}, py::arg("gap_mm") = 0.0, py::arg("workers") = 0,
      "grid search; ranges are (min, max, step)");

  m.def(
      "read_measurements",
      [](const std::string& path) {
        const auto meas = read_measurements(path);
        py::array_t<double> pts({meas.entries.size(), std::size_t{3}});
        auto w = pts.mutable_unchecked<2>();
        std::vector<cplx> v;
        for (std::size_t i = 0; i < meas.entries.size(); ++i) {
          w(i, 0) = meas.entries[i].focus.x;
          w(i, 1) = meas.entries[i].focus.y;
          w(i, 2) = meas.entries[i].focus.z;
          v.push_back(meas.entries[i].value);
        }
        return py::make_tuple(pts, to_array(v), std::array<double, 3>{meas.cal_focus.x, meas.cal_focus.y, meas.cal_focus.z},
                              meas.cal);
      },
      py::arg("path"), "(focus, values, cal_focus, cal)");
}
