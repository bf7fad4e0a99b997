#include "reflectsim/po_imager.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "reflectsim/constants.hpp"
#include "reflectsim/csv.hpp"
#include "reflectsim/errors.hpp"
#include "reflectsim/parallel.hpp"

namespace reflectsim {

namespace {

struct Rect {
  double x0, x1, y0, y1;
  bool empty() const { return x1 - x0 < 1e-9 || y1 - y0 < 1e-9; }
};

Rect intersect(const Rect& a, const Rect& b) {
  return {std::max(a.x0, b.x0), std::min(a.x1, b.x1), std::max(a.y0, b.y0), std::min(a.y1, b.y1)};
}

// Horizontal panel facing -z (towards the arrays).
SurfaceMesh mesh_face(const Rect& r, double z, double max_edge) {
  return mesh_panel({0.5 * (r.x0 + r.x1), 0.5 * (r.y0 + r.y1), z}, {0, 1, 0}, {1, 0, 0}, r.y1 - r.y0,
                    r.x1 - r.x0, max_edge);
}

void append(SurfaceMesh& into, const SurfaceMesh& from) {
  into.facets.insert(into.facets.end(), from.facets.begin(), from.facets.end());
}

std::vector<double> areas_of(const SurfaceMesh& m) {
  std::vector<double> a;
  a.reserve(m.size());
  for (const auto& f : m.facets) a.push_back(f.area);
  return a;
}

// Fields radiated by a sheet onto a set of points, accumulated into E/H.
void radiate_into(const CurrentSheet& src, std::span<const Vec3> obs, const Propagation& medium,
                  std::span<CVec3> E, std::span<CVec3> H, std::size_t workers) {
  if (!src.mesh || src.mesh->size() == 0 || obs.empty()) return;
  const auto pts = src.mesh->centroids();
  const auto areas = areas_of(*src.mesh);
  accumulate_radiation(pts, areas, src.J, src.M, obs, medium, E, H, workers);
}

std::vector<FieldSample> samples(const SurfaceMesh& m, std::span<const CVec3> E, std::span<const CVec3> H) {
  std::vector<FieldSample> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = {m.facets[i].centroid, E[i], H[i]};
  return out;
}

double rms(std::span<const CVec3> v) {
  double s = 0;
  for (const auto& x : v) s += x.norm2();
  return v.empty() ? 0.0 : std::sqrt(s / v.size());
}

void add_into(std::vector<CVec3>& a, const std::vector<CVec3>& b, double sign = 1.0) {
  if (a.empty()) a.assign(b.size(), CVec3{});
  for (std::size_t i = 0; i < b.size(); ++i) a[i] += b[i] * sign;
}

}  // namespace

TargetSurfaces build_target_surfaces(const Scene& scene, double x, double y) {
  TargetSurfaces s;
  s.x = x;
  s.y = y;
  const double w = scene.mesh.window_half_width;
  const double e = scene.mesh.max_edge;
  const Rect window{x - w, x + w, y - w, y + w};
  const Plate& pl = scene.plate;
  const Rect plate{pl.center_x - 0.5 * pl.extent_x, pl.center_x + 0.5 * pl.extent_x,
                   pl.center_y - 0.5 * pl.extent_y, pl.center_y + 0.5 * pl.extent_y};
  const Rect lit = intersect(window, plate);

  std::optional<Rect> footprint;
  if (scene.target) {
    const auto& t = *scene.target;
    if (t.gap > 1e-9) {
      throw ValidationError("physical-optics imaging needs the slab to rest on the plate (gap = 0)");
    }
    const Rect slab{t.center.x - 0.5 * t.extent_x, t.center.x + 0.5 * t.extent_x,
                    t.center.y - 0.5 * t.extent_y, t.center.y + 0.5 * t.extent_y};
    const Rect face = intersect(lit, slab);
    if (!face.empty()) {
      footprint = face;
      s.eps = t.eps;
      auto obj = std::make_shared<SurfaceMesh>(mesh_face(face, t.front_z(), e));
      auto bot = std::make_shared<SurfaceMesh>(mesh_face(face, t.back_z(), e));
      const auto medium = Propagation::in(scene.constants, t.eps);
      s.down = std::make_shared<LatticePropagator>(*obj->grid, *bot->grid, medium);
      s.up = std::make_shared<LatticePropagator>(*bot->grid, *obj->grid, medium);
      s.obj = obj;
      s.bot = bot;
    }
  }

  auto body = std::make_shared<SurfaceMesh>();
  body->target_edge_length = e;
  if (!lit.empty()) {
    if (!footprint) {
      append(*body, mesh_face(lit, pl.z_bg, e));
    } else {
      const Rect& f = *footprint;
      const Rect pieces[4] = {{lit.x0, f.x0, lit.y0, lit.y1},
                              {f.x1, lit.x1, lit.y0, lit.y1},
                              {f.x0, f.x1, lit.y0, f.y0},
                              {f.x0, f.x1, f.y1, lit.y1}};
      for (const auto& r : pieces)
        if (!r.empty()) append(*body, mesh_face(r, pl.z_bg, e));
    }
  }
  s.body = body;
  return s;
}

TargetCurrents& TargetCurrents::operator+=(const TargetCurrents& o) {
  auto add_sheet = [](CurrentSheet& a, const CurrentSheet& b) {
    if (!b.mesh) return;
    if (!a.mesh) {
      a = b;
      return;
    }
    add_into(a.J, b.J);
    if (b.has_magnetic()) add_into(a.M, b.M);
  };
  add_sheet(obj, o.obj);
  add_sheet(body, o.body);
  add_sheet(bot, o.bot);
  if (order_norms.size() < o.order_norms.size()) order_norms.resize(o.order_norms.size(), 0.0);
  for (std::size_t k = 0; k < o.order_norms.size(); ++k) order_norms[k] += o.order_norms[k];
  return *this;
}

PoImager::PoImager(Scene scene, ImagerOptions options) : scene_(std::move(scene)), options_(options) {
  if (options_.k_order < 1) throw ValidationError("K must be at least 1");
  const auto air = Propagation::free_space(scene_.constants);
  for (const auto& fara : scene_.faras) {
    const auto& feed = fara.feed;
    const auto& array = fara.array;
    CurrentSheet horn(std::make_shared<SurfaceMesh>(feed.aperture));
    horn.J = feed.current;
    horn.M.clear();
    const auto pts = array.facets.centroids();
    std::vector<CVec3> E(pts.size()), H(pts.size());
    radiate_into(horn, pts, air, E, H, options_.workers);
    std::vector<CVec3> J(array.count());
    for (std::size_t m = 0; m < array.count(); ++m) {
      const double a0 = array.facets.facets[2 * m].area, a1 = array.facets.facets[2 * m + 1].area;
      const CVec3 e = (E[2 * m] * a0 + E[2 * m + 1] * a1) / cplx(a0 + a1);
      const CVec3 h = (H[2 * m] * a0 + H[2 * m + 1] * a1) / cplx(a0 + a1);
      J[m] = meca(e, h, array.normal, scene_.constants.eta0, kAir, Medium::conductor()).J;
    }
    patch_currents_.push_back(std::move(J));
  }
}

PhaseMask PoImager::mask(std::size_t p, const Vec3& focus) const {
  const auto& fara = scene_.faras.at(p);
  return binary_phase(fara.feed, fara.array, focus, scene_.constants.k0, p);
}

CurrentSheet PoImager::array_sheet(std::size_t p, const Vec3& focus) const {
  const auto& array = scene_.faras.at(p).array;
  const auto masked = apply_mask(patch_currents_.at(p), mask(p, focus));
  CurrentSheet sheet(std::shared_ptr<const SurfaceMesh>(&array.facets, [](const SurfaceMesh*) {}));
  for (std::size_t m = 0; m < masked.size(); ++m) sheet.J[2 * m] = sheet.J[2 * m + 1] = masked[m];
  sheet.M.clear();
  return sheet;
}

const TargetSurfaces& PoImager::surfaces(double x, double y) {
  const auto key = std::make_pair(x, y);
  auto it = surfaces_.find(key);
  if (it == surfaces_.end()) it = surfaces_.emplace(key, build_target_surfaces(scene_, x, y)).first;
  return it->second;
}

Illumination PoImager::illuminate(std::size_t p, const Vec3& focus, const TargetSurfaces& s) const {
  Illumination ill;
  ill.feed = p;
  ill.focus = focus;
  const auto sheet = array_sheet(p, focus);
  const auto air = Propagation::free_space(scene_.constants);
  if (s.obj) {
    ill.E_obj.assign(s.obj->size(), CVec3{});
    ill.H_obj.assign(s.obj->size(), CVec3{});
    radiate_into(sheet, s.obj->centroids(), air, ill.E_obj, ill.H_obj, options_.workers);
  }
  ill.E_body.assign(s.body->size(), CVec3{});
  ill.H_body.assign(s.body->size(), CVec3{});
  radiate_into(sheet, s.body->centroids(), air, ill.E_body, ill.H_body, options_.workers);
  return ill;
}

TargetCurrents PoImager::cascade(const Illumination& field, const TargetSurfaces& s, int k_order) const {
  if (k_order < 1) throw ValidationError("K must be at least 1");
  const auto& c = scene_.constants;
  TargetCurrents out;
  out.body = induce_currents(samples(*s.body, field.E_body, field.H_body), s.body, c, kAir,
                             Medium::conductor());
  if (!s.has_slab()) return out;

  const Medium slab = Medium::dielectric(s.eps);
  out.obj = induce_currents(samples(*s.obj, field.E_obj, field.H_obj), s.obj, c, kAir, slab);
  out.order_norms.push_back(rms(out.obj.J));
  out.bot = CurrentSheet(s.bot);
  out.bot.M.clear();

  const std::size_t n = s.obj->size();
  // Currents radiating into the slab from the front face: transmitted side first.
  std::vector<CVec3> srcJ(n), srcM(n);
  for (std::size_t i = 0; i < n; ++i) {
    srcJ[i] = -out.obj.J[i];
    srcM[i] = -out.obj.M[i];
  }
  for (int k = 1; k < k_order; ++k) {
    std::vector<CVec3> E(n), H(n);
    s.down->apply(srcJ, srcM, E, H);
    const auto bot = induce_currents(samples(*s.bot, E, H), s.bot, c, s.eps, Medium::conductor());
    add_into(out.bot.J, bot.J);

    std::fill(E.begin(), E.end(), CVec3{});
    std::fill(H.begin(), H.end(), CVec3{});
    s.up->apply(bot.J, {}, E, H);
    const auto back = induce_currents(samples(*s.obj, E, H), s.obj, c, s.eps, Medium::dielectric(kAir),
                                      /*flip_normals=*/true);
    for (std::size_t i = 0; i < n; ++i) {
      out.obj.J[i] -= back.J[i];
      out.obj.M[i] -= back.M[i];
      srcJ[i] = back.J[i];
      srcM[i] = back.M[i];
    }
    out.order_norms.push_back(rms(back.J));
  }
  return out;
}

cplx PoImager::receive(const Illumination& rx, const TargetCurrents& currents) const {
  const auto& feed = scene_.faras.at(rx.feed).feed;
  cplx denom{};
  for (std::size_t i = 0; i < feed.aperture.size(); ++i) {
    denom += dot(feed.current[i], feed.polarization) * feed.aperture.facets[i].area;
  }
  if (std::abs(denom) == 0.0) throw NumericalError("receive: feed polarization gives a zero reaction");

  cplx num{};
  if (currents.obj.mesh) {
    const auto& m = *currents.obj.mesh;
    for (std::size_t i = 0; i < m.size(); ++i) {
      cplx r = dot(rx.E_obj[i], currents.obj.J[i]);
      if (currents.obj.has_magnetic()) r -= dot(rx.H_obj[i], currents.obj.M[i]);
      num += r * m.facets[i].area;
    }
  }
  if (currents.body.mesh) {
    const auto& m = *currents.body.mesh;
    for (std::size_t i = 0; i < m.size(); ++i) num += dot(rx.E_body[i], currents.body.J[i]) * m.facets[i].area;
  }
  return num / denom;
}

cplx PoImager::back_propagate(std::size_t p, const Vec3& focus, const TargetCurrents& currents,
                              const TargetSurfaces&) const {
  const auto& fara = scene_.faras.at(p);
  const auto& array = fara.array;
  const auto air = Propagation::free_space(scene_.constants);
  const auto pts = array.facets.centroids();
  std::vector<CVec3> E(pts.size()), H(pts.size());
  if (currents.obj.mesh) radiate_into(currents.obj, pts, air, E, H, options_.workers);
  if (currents.body.mesh) radiate_into(currents.body, pts, air, E, H, options_.workers);

  const auto m = mask(p, focus);
  CurrentSheet sheet(std::shared_ptr<const SurfaceMesh>(&array.facets, [](const SurfaceMesh*) {}));
  sheet.M.clear();
  for (std::size_t q = 0; q < array.count(); ++q) {
    const double a0 = array.facets.facets[2 * q].area, a1 = array.facets.facets[2 * q + 1].area;
    const CVec3 e = (E[2 * q] * a0 + E[2 * q + 1] * a1) / cplx(a0 + a1);
    const CVec3 h = (H[2 * q] * a0 + H[2 * q + 1] * a1) / cplx(a0 + a1);
    const CVec3 j = meca(e, h, array.normal, scene_.constants.eta0, kAir, Medium::conductor()).J * m.factor(q);
    sheet.J[2 * q] = sheet.J[2 * q + 1] = j;
  }

  const auto& feed = fara.feed;
  const auto horn = feed.aperture.centroids();
  std::vector<CVec3> Eh(horn.size()), Hh(horn.size());
  radiate_into(sheet, horn, air, Eh, Hh, options_.workers);
  cplx num{}, denom{};
  for (std::size_t i = 0; i < horn.size(); ++i) {
    const double a = feed.aperture.facets[i].area;
    num += dot(Eh[i], feed.current[i]) * a;
    denom += dot(feed.current[i], feed.polarization) * a;
  }
  if (std::abs(denom) == 0.0) throw NumericalError("receive: feed polarization gives a zero reaction");
  return num / denom;
}

PoImager::FocusRun PoImager::run_focus(const Vec3& focus, std::optional<int> k_order) {
  const int K = k_order.value_or(options_.k_order);
  const auto& s = surfaces(focus.x, focus.y);
  FocusRun run;
  for (std::size_t p = 0; p < scene_.faras.size(); ++p) {
    run.fields.push_back(illuminate(p, focus, s));
    run.currents += cascade(run.fields.back(), s, K);
  }
  for (const auto& f : run.fields) {
    run.received.push_back(receive(f, run.currents));
    run.total += run.received.back();
  }
  return run;
}

ReceivedFieldSet PoImager::simulate_received(std::span<const Vec3> focus_points, std::optional<int> k_order) {
  ReceivedFieldSet out;
  for (const auto& f : focus_points) {
    const auto run = run_focus(f, k_order);
    out.focus.push_back(f);
    out.per_receiver.push_back(run.received);
    out.total.push_back(run.total);
  }
  return out;
}

double three_db_width(std::span<const double> offsets, std::span<const double> amplitude) {
  const std::size_t n = amplitude.size();
  if (n == 0 || offsets.size() != n) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t peak = std::max_element(amplitude.begin(), amplitude.end()) - amplitude.begin();
  const double level = amplitude[peak] / std::sqrt(2.0);
  auto crossing = [&](std::size_t inside, std::size_t outside) {
    const double t = (amplitude[inside] - level) / (amplitude[inside] - amplitude[outside]);
    return offsets[inside] + t * (offsets[outside] - offsets[inside]);
  };
  std::optional<double> left, right;
  for (std::size_t i = peak; i > 0; --i) {
    if (amplitude[i - 1] < level) {
      left = crossing(i, i - 1);
      break;
    }
  }
  for (std::size_t i = peak; i + 1 < n; ++i) {
    if (amplitude[i + 1] < level) {
      right = crossing(i, i + 1);
      break;
    }
  }
  if (!left || !right) return std::numeric_limits<double>::infinity();
  return *right - *left;
}

PsfResult PoImager::psf(const Vec3& focus, PsfSpec spec) const {
  const double lambda = scene_.constants.wavelength;
  if (spec.half_extent <= 0) spec.half_extent = 3 * lambda;
  if (spec.step <= 0) spec.step = lambda / 10;
  PsfResult out;
  out.focus = focus;
  const int half = static_cast<int>(std::floor(spec.half_extent / spec.step + 1e-9));
  for (int i = -half; i <= half; ++i) out.offsets.push_back(i * spec.step);

  std::vector<Vec3> pts;
  const Vec3 axes[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (const auto& a : axes)
    for (double o : out.offsets) pts.push_back(focus + a * o);
  const std::size_t cut_points = pts.size();
  if (spec.volume) {
    for (double dz : out.offsets)
      for (double dy : out.offsets)
        for (double dx : out.offsets) pts.push_back(focus + Vec3{dx, dy, dz});
  }

  const auto air = Propagation::free_space(scene_.constants);
  std::vector<CVec3> E(pts.size()), H(pts.size());
  for (std::size_t p = 0; p < scene_.faras.size(); ++p) {
    radiate_into(array_sheet(p, focus), pts, air, E, H, options_.workers);
  }

  const std::size_t n = out.offsets.size();
  double best1 = -1, best2 = -1;
  auto track = [&](const Vec3& r, const CVec3& e) {
    const double a1 = e.norm(), a2 = std::abs(dot(e, e));
    if (a1 > best1) best1 = a1, out.peak_one_way = r;
    if (a2 > best2) best2 = a2, out.peak_two_way = r;
  };
  for (int a = 0; a < 3; ++a) {
    out.cut[a].assign(E.begin() + a * n, E.begin() + (a + 1) * n);
    std::vector<double> one(n), two(n);
    for (std::size_t i = 0; i < n; ++i) {
      one[i] = out.cut[a][i].norm();
      two[i] = std::abs(dot(out.cut[a][i], out.cut[a][i]));
      if (!spec.volume) track(pts[a * n + i], out.cut[a][i]);
    }
    out.width_one_way[a] = three_db_width(out.offsets, one);
    out.width_two_way[a] = three_db_width(out.offsets, two);
  }
  if (spec.volume) {
    out.volume_points.assign(pts.begin() + cut_points, pts.end());
    out.volume_field.assign(E.begin() + cut_points, E.end());
    for (std::size_t i = 0; i < out.volume_points.size(); ++i) track(out.volume_points[i], out.volume_field[i]);
  }
  return out;
}

ProfileImage PoImager::reconstruct_profile(std::vector<double> xs, std::vector<double> ys, double z_min,
                                           double z_max, double dz, std::optional<int> k_order) {
  if (!(dz > 0)) throw ValidationError("profile: dz must be positive");
  if (!(z_max >= z_min)) throw ValidationError("profile: empty z range");
  if (xs.empty() || ys.empty()) throw ValidationError("profile: empty transverse grid");
  ProfileImage img;
  img.xs = std::move(xs);
  img.ys = std::move(ys);
  const int nz = static_cast<int>(std::floor((z_max - z_min) / dz + 1e-9)) + 1;
  for (int i = 0; i < nz; ++i) img.zs.push_back(z_min + i * dz);
  for (double y : img.ys)
    for (double x : img.xs)
      for (double z : img.zs) {
        const auto why = scene_.roi.violation({x, y, z});
        if (!why.empty()) throw ValidationError("focus point outside the RoI: " + why);
      }

  for (double y : img.ys) {
    for (double x : img.xs) {
      std::vector<cplx> trace;
      double best = -1, best_z = img.zs.front();
      for (double z : img.zs) {
        const cplx e = run_focus({x, y, z}, k_order).total;
        trace.push_back(e);
        if (std::abs(e) > best) {  // strict: the smallest z wins ties
          best = std::abs(e);
          best_z = z;
        }
      }
      img.z_imaging.push_back(best_z);
      img.peak.push_back(best);
      img.traces.push_back(std::move(trace));
    }
  }
  return img;
}

void write_psf_csv(std::ostream& out, const PsfResult& psf) {
  out << "x_mm,y_mm,z_mm,e_mag,response\n";
  auto row = [&](const Vec3& r, const CVec3& e) {
    out << num(r.x) << ',' << num(r.y) << ',' << num(r.z) << ',' << num(e.norm()) << ','
        << num(std::abs(dot(e, e))) << '\n';
  };
  if (!psf.volume_points.empty()) {
    for (std::size_t i = 0; i < psf.volume_points.size(); ++i) row(psf.volume_points[i], psf.volume_field[i]);
    return;
  }
  const Vec3 axes[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (int a = 0; a < 3; ++a)
    for (std::size_t i = 0; i < psf.offsets.size(); ++i) row(psf.focus + axes[a] * psf.offsets[i], psf.cut[a][i]);
}

void write_profile_csv(std::ostream& out, const ProfileImage& image) {
  out << "x_mm,y_mm,z_imaging_mm,peak_magnitude\n";
  for (std::size_t iy = 0; iy < image.ys.size(); ++iy)
    for (std::size_t ix = 0; ix < image.xs.size(); ++ix) {
      const std::size_t k = iy * image.xs.size() + ix;
      out << num(image.xs[ix]) << ',' << num(image.ys[iy]) << ',' << num(image.z_imaging[k]) << ','
          << num(image.peak[k]) << '\n';
    }
}

std::string profile_metadata_json(const ProfileImage& image, const std::string& hash, int k_order, double dz) {
  nlohmann::ordered_json j;
  j["scene_hash"] = hash;
  j["k_order"] = k_order;
  j["dz_mm"] = dz;
  j["grid"] = {{"x_mm", image.xs}, {"y_mm", image.ys}, {"z_min_mm", image.zs.front()}, {"z_max_mm", image.zs.back()}};
  return j.dump(2) + "\n";
}

void write_currents_csv(std::ostream& out, const CurrentSheet& sheet) {
  out << "facet,cx,cy,cz,jx_re,jx_im,jy_re,jy_im,jz_re,jz_im,mx_re,mx_im,my_re,my_im,mz_re,mz_im\n";
  for (std::size_t i = 0; i < sheet.size(); ++i) {
    const auto& c = sheet.mesh->facets[i].centroid;
    const CVec3 m = sheet.has_magnetic() ? sheet.M[i] : CVec3{};
    out << i << ',' << num(c.x) << ',' << num(c.y) << ',' << num(c.z);
    for (const CVec3* v : {&sheet.J[i], &m})
      for (const cplx& x : {v->x, v->y, v->z}) out << ',' << num(x.real()) << ',' << num(x.imag());
    out << '\n';
  }
}

}  // namespace reflectsim
