#include "reflectsim/go_forward.hpp"

#include <cmath>
#include <ostream>

#include "reflectsim/constants.hpp"
#include "reflectsim/csv.hpp"
#include "reflectsim/em_kernels.hpp"
#include "reflectsim/errors.hpp"
#include "reflectsim/reflectarray.hpp"

namespace reflectsim {

TLStack TLStack::slab_on_conductor(ComplexPermittivity eps, double thickness, double gap) {
  TLStack s;
  s.layers.push_back({0.0, kAir, false});
  s.layers.push_back({thickness, eps, false});
  if (gap > 0.0) s.layers.push_back({gap, kAir, false});
  s.layers.push_back({0.0, kAir, true});
  return s;
}

void TLStack::validate() const {
  if (layers.size() < 2) throw ValidationError("TL stack needs at least two layers");
  if (layers.front().pec || layers.front().eps != kAir) throw ValidationError("TL stack must start in air");
  for (std::size_t i = 1; i + 1 < layers.size(); ++i) {
    if (layers[i].pec) throw ValidationError("TL stack: conductor only allowed as the last layer");
    if (!(layers[i].thickness >= 0.0)) throw ValidationError("TL stack: negative layer thickness");
  }
}

cplx normalized_kz(cplx eps, double sin_theta) {
  return transmitted_kz(sin_theta, 1.0, eps);
}

namespace {

// Characteristic impedance per unit of the free-space value.
cplx layer_impedance(cplx eps, cplx kz, Mode mode) { return mode == Mode::TE ? 1.0 / kz : kz / eps; }

}  // namespace

cplx tl_reflection(const TLStack& stack, double theta_inc, Mode mode, double k0) {
  stack.validate();
  const double s = std::sin(theta_inc);
  const auto& last = stack.layers.back();
  // Load impedance seen at the bottom of the last finite layer. A conductor is
  // an exact short, so bare-plate and zero-thickness cases give exactly -1.
  cplx z_load = last.pec ? cplx{0.0} : layer_impedance(last.eps.value(), normalized_kz(last.eps.value(), s), mode);
  for (std::size_t i = stack.layers.size() - 2; i >= 1; --i) {
    const auto& L = stack.layers[i];
    const cplx eps = L.eps.value();
    const cplx kz = normalized_kz(eps, s);
    const cplx z = layer_impedance(eps, kz, mode);
    const cplx t = std::tan(k0 * kz * L.thickness);
    if (t != 0.0) z_load = z * (z_load + kJ * z * t) / (z + kJ * z_load * t);
  }
  const cplx z1 = layer_impedance(1.0, normalized_kz(1.0, s), mode);
  return (z_load - z1) / (z_load + z1);
}

GoModel::GoModel(const Scene& scene, GoOptions options) : scene_(&scene), options_(options) {
  if (options_.gap_mm < 0) throw ValidationError("GO model: negative air gap");
}

RayPath GoModel::trace_ray(std::size_t p, std::size_t m, const Vec3& focus, double thickness) const {
  const auto& sc = *scene_;
  const double k0 = sc.constants.k0;
  const auto& fara = sc.faras.at(p);
  const Vec3 feed = fara.feed.aperture_center;
  const Vec3 patch = fara.array.patch_centers.at(m);

  RayPath r;
  r.feed = p;
  r.patch = m;
  r.r1 = distance(patch, feed);
  const Vec3 d = (focus - patch).normalized();
  const double cos_t = d.z;
  if (!(cos_t > 0)) throw ValidationError("trace_ray: focus is not in front of the array");
  r.theta = std::acos(std::min(cos_t, 1.0));
  const double z_obj = front_z(thickness);
  r.hit = patch + d * ((z_obj - patch.z) / cos_t);
  r.r2 = distance(r.hit, patch);

  // TE share of the feed polarisation carried along the ray.
  const Vec3 pol = fara.feed.polarization;
  Vec3 e = pol - d * dot(d, pol);
  const Vec3 te = cross(d, Vec3{0, 0, 1});
  if (e.norm() > 1e-12 && te.norm() > 1e-12) {
    const double c = dot(e.normalized(), te.normalized());
    r.w_te = c * c;
  }

  // Specular return towards the array planes.
  const Vec3 back{d.x, d.y, -d.z};
  for (std::size_t q = 0; q < sc.faras.size(); ++q) {
    const auto& arr = sc.faras[q].array;
    const double denom = dot(back, arr.normal);
    if (std::abs(denom) < 1e-12) continue;
    const double t = dot(arr.center - r.hit, arr.normal) / denom;
    if (t <= 0) continue;
    const auto hit_patch = arr.nearest_patch(r.hit + back * t);
    if (!hit_patch) continue;
    r.returned = true;
    r.rx_feed = q;
    r.rx_patch = *hit_patch;
    break;
  }
  if (!r.returned) return r;

  const auto& rx = sc.faras[r.rx_feed];
  const Vec3 patch2 = rx.array.patch_centers[r.rx_patch];
  r.r3 = distance(patch2, r.hit);
  r.r4 = distance(rx.feed.aperture_center, patch2);
  r.r5 = distance(patch2, focus);
  const double psi1 = needs_flip(k0 * (r.r1 + distance(patch, focus))) ? kPi : 0.0;
  const double psi2 = needs_flip(k0 * (r.r4 + r.r5)) ? kPi : 0.0;

  const cplx e_patch = std::polar(1.0 / r.r1, -k0 * r.r1);
  double s2, s3, s4;
  if (options_.spreading == Spreading::Verbatim) {
    s2 = 1.0 / (1.0 + r.r2 / r.r1);
    s3 = 1.0 / (1.0 + r.r3 / r.r3);
    s4 = 1.0 / (1.0 + r.r4 / r.r5);
  } else {
    s2 = r.r1 / (r.r1 + r.r2);
    s3 = (r.r1 + r.r2) / (r.r1 + r.r2 + r.r3);
    s4 = (r.r1 + r.r2 + r.r3) / (r.r1 + r.r2 + r.r3 + r.r4);
  }
  const cplx e_obj = -e_patch * std::polar(s2, -(k0 * r.r2 - psi1));
  const cplx e_patch2 = e_obj * std::polar(s3, -k0 * r.r3);
  r.amplitude = -e_patch2 * std::polar(s4, -(k0 * r.r4 - psi2));
  return r;
}

RayBundle GoModel::trace(const Vec3& focus, double thickness) const {
  RayBundle b;
  b.focus = focus;
  b.thickness = thickness;
  for (std::size_t p = 0; p < scene_->faras.size(); ++p) {
    for (std::size_t m = 0; m < scene_->faras[p].array.count(); ++m) {
      auto r = trace_ray(p, m, focus, thickness);
      if (r.returned) {
        b.rays.push_back(r);
      } else {
        ++b.dropped;
      }
    }
  }
  return b;
}

cplx GoModel::predict(const RayBundle& bundle, const TLStack& stack) const {
  const double k0 = scene_->constants.k0;
  cplx sum{};
  for (const auto& r : bundle.rays) {
    const cplx g = r.w_te * tl_reflection(stack, r.theta, Mode::TE, k0) +
                   (1.0 - r.w_te) * tl_reflection(stack, r.theta, Mode::TM, k0);
    sum += r.amplitude * g;
  }
  return sum;
}

cplx GoModel::predict(const RayBundle& bundle, ComplexPermittivity eps) const {
  return predict(bundle, TLStack::slab_on_conductor(eps, bundle.thickness, options_.gap_mm));
}

cplx GoModel::predict_received(const Vec3& focus, ComplexPermittivity eps, double thickness) const {
  validate(eps);
  if (!(thickness >= 0)) throw ValidationError("GO model: negative thickness");
  return predict(trace(focus, thickness), eps);
}

SweepRays GoModel::trace_sweep(const Vec3& focus, std::span<const double> thickness) const {
  SweepRays out;
  out.focus = focus;
  out.thickness.assign(thickness.begin(), thickness.end());
  std::size_t total = 0;
  for (const auto& f : scene_->faras) total += f.array.count();
  out.amplitude.assign(total * thickness.size(), cplx{});
  std::size_t r = 0;
  for (std::size_t p = 0; p < scene_->faras.size(); ++p) {
    for (std::size_t m = 0; m < scene_->faras[p].array.count(); ++m, ++r) {
      for (std::size_t t = 0; t < thickness.size(); ++t) {
        const auto ray = trace_ray(p, m, focus, thickness[t]);
        if (t == 0) {
          out.sin_theta.push_back(std::sin(ray.theta));
          out.cos_theta.push_back(std::cos(ray.theta));
          out.w_te.push_back(ray.w_te);
        }
        if (ray.returned) out.amplitude[t * total + r] = ray.amplitude;
      }
    }
  }
  return out;
}

std::vector<cplx> GoModel::predict_sweep(const SweepRays& rays, ComplexPermittivity eps) const {
  const double k0 = scene_->constants.k0;
  const double gap = options_.gap_mm;
  const cplx e = eps.value();
  const std::size_t n = rays.rays(), nt = rays.thickness.size();
  std::vector<cplx> sum(nt, cplx{});
  if (nt == 0) return sum;
  for (std::size_t r = 0; r < n; ++r) {
    const double s = rays.sin_theta[r];
    const double kz1 = rays.cos_theta[r];
    const cplx kz = normalized_kz(e, s);
    // slab-referenced reflection of the load below the slab, per mode
    const cplx z_slab[2] = {1.0 / kz, kz / e};
    const double z_air[2] = {1.0 / kz1, kz1};
    cplx rho_l[2], r12[2];
    for (int md = 0; md < 2; ++md) {
      cplx zl = 0.0;
      if (gap > 0.0) zl = kJ * z_air[md] * std::tan(k0 * kz1 * gap);
      rho_l[md] = (zl - z_slab[md]) / (zl + z_slab[md]);
      r12[md] = (z_slab[md] - z_air[md]) / (z_slab[md] + z_air[md]);
    }
    const cplx phase = -2.0 * kJ * k0 * kz;
    const double w = rays.w_te[r];
    for (std::size_t t = 0; t < nt; ++t) {
      const cplx a = rays.amplitude[t * n + r];
      if (a == 0.0) continue;
      // round trip through the slab; evaluated per node so a value never
      // depends on which other thicknesses are in the sweep
      const double T = rays.thickness[t];
      const cplx xt = T == 0.0 ? cplx{1.0} : std::polar(std::exp(phase.real() * T), phase.imag() * T);
      const cplx pe = rho_l[0] * xt, pm = rho_l[1] * xt;
      const cplx gte = (r12[0] + pe) / (1.0 + r12[0] * pe);
      const cplx gtm = (r12[1] + pm) / (1.0 + r12[1] * pm);
      sum[t] += a * (w * gte + (1.0 - w) * gtm);
    }
  }
  return sum;
}

void write_trace_csv(std::ostream& out, std::span<const double> focus_z, std::span<const cplx> values) {
  out << "focus_z_mm,re,im,magnitude,phase_deg\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    out << num(focus_z[i]) << ',' << num(values[i].real()) << ',' << num(values[i].imag()) << ','
        << num(std::abs(values[i])) << ',' << num(std::arg(values[i]) * 180.0 / kPi) << '\n';
  }
}

}  // namespace reflectsim
