#include "reflectsim/em_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

#include <fftw3.h>

#include "reflectsim/constants.hpp"
#include "reflectsim/errors.hpp"
#include "reflectsim/parallel.hpp"

namespace reflectsim {

Propagation Propagation::in(const PhysicalConstants& c, const ComplexPermittivity& eps) {
  const cplx n = std::sqrt(eps.value());
  return {c.k0 * n, c.eta0 / n};
}

namespace {

// Scalar factors of the dyadic kernel for one source/observer pair:
//   E = a*J + b*(J.R)R - c*(M x R),   H = (a*M + b*(M.R)R)/eta^2 + c*(J x R)
// with the e^{-jkR} delay and the source area folded in.
struct KernelTerms {
  cplx a, b, c;
};

inline KernelTerms kernel_terms(double R, cplx k, cplx eta, double area) {
  const cplx kr = k * R;
  const cplx jkr = kJ * kr;
  const double inv_r = 1.0 / R;
  const double inv_r3 = inv_r * inv_r * inv_r;
  const cplx phase = std::exp(-jkr) * area;
  const cplx A1 = kJ * eta / (4.0 * kPi * k);
  const cplx G1 = (-1.0 - jkr + kr * kr) * inv_r3;
  const cplx G2 = (3.0 + 3.0 * jkr - kr * kr) * (inv_r3 * inv_r * inv_r);
  const cplx G3 = (1.0 + jkr) * inv_r3;
  return {-A1 * G1 * phase, -A1 * G2 * phase, G3 * phase / (4.0 * kPi)};
}

}  // namespace

namespace {

// sin and cos of x >= 0 without branches, so the observer loop below
// vectorises. Cody-Waite reduction by pi/2 and fdlibm kernels on [-pi/4, pi/4].
inline void sincos_reduced(double x, double& s, double& c) {
  constexpr double kTwoOverPi = 6.36619772367581382433e-01;
  constexpr double kPio2_1 = 1.57079632673412561417e+00;
  constexpr double kPio2_2 = 6.07710050630396597660e-11;
  constexpr double kPio2_2t = 2.02226624879595063154e-21;
  constexpr double kRound = 6755399441055744.0;  // 1.5 * 2^52
  const double q = (x * kTwoOverPi + kRound) - kRound;
  const double r = ((x - q * kPio2_1) - q * kPio2_2) - q * kPio2_2t;
  const double z = r * r;
  const double sp = r + r * z * (-1.66666666666666324348e-01 +
                                 z * (8.33333333332248946124e-03 +
                                      z * (-1.98412698298579493134e-04 +
                                           z * (2.75573137070700676789e-06 +
                                                z * (-2.50507602534068634195e-08 + z * 1.58969099521155010221e-10)))));
  const double cp = 1.0 - 0.5 * z +
                    z * z * (4.16666666666666019037e-02 +
                             z * (-1.38888888888741095749e-03 +
                                  z * (2.48015872894767294178e-05 +
                                       z * (-2.75573143513906633035e-07 +
                                            z * (2.08757232129817482790e-09 + z * -1.13596475577881948265e-11)))));
  const int quadrant = static_cast<int>(q) & 3;
  const double s0 = (quadrant & 1) ? cp : sp;
  const double c0 = (quadrant & 1) ? sp : cp;
  s = (quadrant & 2) ? -s0 : s0;
  c = ((quadrant + 1) & 2) ? -c0 : c0;
}

struct SourceArrays {
  std::vector<double> x, y, z, area;
  std::vector<double> jr[3], ji[3], mr[3], mi[3];
};

constexpr std::size_t kObserverBlock = 256;

// Lossless medium: observers in the inner loop, sources in the outer loop, so
// each observer still sums its sources in index order.
template <bool Magnetic>
void radiate_block_lossless(const SourceArrays& src, const Vec3* obs, std::size_t count, double k,
                            double eta, CVec3* E, CVec3* H) {
  alignas(64) double ox[kObserverBlock], oy[kObserverBlock], oz[kObserverBlock];
  alignas(64) double er[3][kObserverBlock] = {}, ei[3][kObserverBlock] = {};
  alignas(64) double hr[3][kObserverBlock] = {}, hi[3][kObserverBlock] = {};
  long singular = 0;
  constexpr double tol2 = kSingularDistance * kSingularDistance;
  for (std::size_t i = 0; i < count; ++i) {
    ox[i] = obs[i].x;
    oy[i] = obs[i].y;
    oz[i] = obs[i].z;
  }
  const double alpha = eta / (4.0 * kPi * k);  // A1 = j*alpha
  const double inv_4pi = 1.0 / (4.0 * kPi);
  const double inv_eta2 = 1.0 / (eta * eta);
  const std::size_t ns = src.x.size();
  for (std::size_t s = 0; s < ns; ++s) {
    const double sx = src.x[s], sy = src.y[s], sz = src.z[s], area = src.area[s];
    const double jxr = src.jr[0][s], jyr = src.jr[1][s], jzr = src.jr[2][s];
    const double jxi = src.ji[0][s], jyi = src.ji[1][s], jzi = src.ji[2][s];
    double mxr = 0, myr = 0, mzr = 0, mxi = 0, myi = 0, mzi = 0;
    if constexpr (Magnetic) {
      mxr = src.mr[0][s], myr = src.mr[1][s], mzr = src.mr[2][s];
      mxi = src.mi[0][s], myi = src.mi[1][s], mzi = src.mi[2][s];
    }
    for (std::size_t i = 0; i < count; ++i) {
      const double dx = ox[i] - sx, dy = oy[i] - sy, dz = oz[i] - sz;
      const double r2 = dx * dx + dy * dy + dz * dz;
      singular += r2 < tol2;
      const double R = std::sqrt(r2);
      const double inv_r = 1.0 / R;
      const double inv_r3 = inv_r * inv_r * inv_r;
      const double inv_r5 = inv_r3 * inv_r * inv_r;
      const double kr = k * R;
      double sn, cs;
      sincos_reduced(kr, sn, cs);
      const double pr = area * cs, pi = -area * sn;  // area * e^{-jkR}
      // a = -j*alpha*G1*phase, b = -j*alpha*G2*phase, c = G3*phase/(4 pi)
      const double g1r = (kr * kr - 1.0) * inv_r3, g1i = -kr * inv_r3;
      const double g2r = (3.0 - kr * kr) * inv_r5, g2i = 3.0 * kr * inv_r5;
      const double g3r = inv_r3, g3i = kr * inv_r3;
      const double t1r = g1r * pr - g1i * pi, t1i = g1r * pi + g1i * pr;
      const double t2r = g2r * pr - g2i * pi, t2i = g2r * pi + g2i * pr;
      const double ar = alpha * t1i, ai = -alpha * t1r;
      const double br = alpha * t2i, bi = -alpha * t2r;
      const double cr = inv_4pi * (g3r * pr - g3i * pi), ci = inv_4pi * (g3r * pi + g3i * pr);

      // E += a J + b (J.R) R ; H += c (J x R)
      const double jdr = jxr * dx + jyr * dy + jzr * dz, jdi = jxi * dx + jyi * dy + jzi * dz;
      const double bjr = br * jdr - bi * jdi, bji = br * jdi + bi * jdr;
      er[0][i] += ar * jxr - ai * jxi + bjr * dx;
      ei[0][i] += ar * jxi + ai * jxr + bji * dx;
      er[1][i] += ar * jyr - ai * jyi + bjr * dy;
      ei[1][i] += ar * jyi + ai * jyr + bji * dy;
      er[2][i] += ar * jzr - ai * jzi + bjr * dz;
      ei[2][i] += ar * jzi + ai * jzr + bji * dz;
      const double xr0 = jyr * dz - jzr * dy, xi0 = jyi * dz - jzi * dy;
      const double xr1 = jzr * dx - jxr * dz, xi1 = jzi * dx - jxi * dz;
      const double xr2 = jxr * dy - jyr * dx, xi2 = jxi * dy - jyi * dx;
      hr[0][i] += cr * xr0 - ci * xi0;
      hi[0][i] += cr * xi0 + ci * xr0;
      hr[1][i] += cr * xr1 - ci * xi1;
      hi[1][i] += cr * xi1 + ci * xr1;
      hr[2][i] += cr * xr2 - ci * xi2;
      hi[2][i] += cr * xi2 + ci * xr2;
      if constexpr (Magnetic) {
        // E -= c (M x R) ; H += (a M + b (M.R) R) / eta^2
        const double yr0 = myr * dz - mzr * dy, yi0 = myi * dz - mzi * dy;
        const double yr1 = mzr * dx - mxr * dz, yi1 = mzi * dx - mxi * dz;
        const double yr2 = mxr * dy - myr * dx, yi2 = mxi * dy - myi * dx;
        er[0][i] -= cr * yr0 - ci * yi0;
        ei[0][i] -= cr * yi0 + ci * yr0;
        er[1][i] -= cr * yr1 - ci * yi1;
        ei[1][i] -= cr * yi1 + ci * yr1;
        er[2][i] -= cr * yr2 - ci * yi2;
        ei[2][i] -= cr * yi2 + ci * yr2;
        const double mdr = mxr * dx + myr * dy + mzr * dz, mdi = mxi * dx + myi * dy + mzi * dz;
        const double bmr = (br * mdr - bi * mdi) * inv_eta2, bmi = (br * mdi + bi * mdr) * inv_eta2;
        const double sar = ar * inv_eta2, sai = ai * inv_eta2;
        hr[0][i] += sar * mxr - sai * mxi + bmr * dx;
        hi[0][i] += sar * mxi + sai * mxr + bmi * dx;
        hr[1][i] += sar * myr - sai * myi + bmr * dy;
        hi[1][i] += sar * myi + sai * myr + bmi * dy;
        hr[2][i] += sar * mzr - sai * mzi + bmr * dz;
        hi[2][i] += sar * mzi + sai * mzr + bmi * dz;
      }
    }
  }
  if (singular > 0) {
    throw NumericalError("radiate: singular kernel, observer coincides with a source centroid");
  }
  for (std::size_t i = 0; i < count; ++i) {
    E[i] += CVec3{cplx{er[0][i], ei[0][i]}, cplx{er[1][i], ei[1][i]}, cplx{er[2][i], ei[2][i]}};
    H[i] += CVec3{cplx{hr[0][i], hi[0][i]}, cplx{hr[1][i], hi[1][i]}, cplx{hr[2][i], hi[2][i]}};
  }
}

}  // namespace

void accumulate_radiation(std::span<const Vec3> source_points, std::span<const double> source_areas,
                          std::span<const CVec3> J, std::span<const CVec3> M,
                          std::span<const Vec3> observers, const Propagation& medium,
                          std::span<CVec3> E, std::span<CVec3> H, std::size_t workers) {
  const std::size_t ns = source_points.size();
  if (source_areas.size() != ns || J.size() != ns || (!M.empty() && M.size() != ns)) {
    throw ValidationError("radiate: source arrays have mismatched lengths");
  }
  if (E.size() != observers.size() || H.size() != observers.size()) {
    throw ValidationError("radiate: output arrays must match the observer count");
  }
  const bool magnetic = !M.empty();

  if (medium.k.imag() == 0.0 && medium.eta.imag() == 0.0) {
    SourceArrays src;
    for (auto* v : {&src.x, &src.y, &src.z, &src.area}) v->resize(ns);
    for (int c = 0; c < 3; ++c) {
      src.jr[c].resize(ns);
      src.ji[c].resize(ns);
      if (magnetic) {
        src.mr[c].resize(ns);
        src.mi[c].resize(ns);
      }
    }
    for (std::size_t s = 0; s < ns; ++s) {
      src.x[s] = source_points[s].x;
      src.y[s] = source_points[s].y;
      src.z[s] = source_points[s].z;
      src.area[s] = source_areas[s];
      const cplx j[3] = {J[s].x, J[s].y, J[s].z};
      for (int c = 0; c < 3; ++c) {
        src.jr[c][s] = j[c].real();
        src.ji[c][s] = j[c].imag();
      }
      if (magnetic) {
        const cplx m[3] = {M[s].x, M[s].y, M[s].z};
        for (int c = 0; c < 3; ++c) {
          src.mr[c][s] = m[c].real();
          src.mi[c][s] = m[c].imag();
        }
      }
    }
    const std::size_t blocks = (observers.size() + kObserverBlock - 1) / kObserverBlock;
    const double k = medium.k.real(), eta = medium.eta.real();
    parallel_for(blocks, workers, [&](std::size_t b) {
      const std::size_t begin = b * kObserverBlock;
      const std::size_t count = std::min(kObserverBlock, observers.size() - begin);
      if (magnetic) {
        radiate_block_lossless<true>(src, observers.data() + begin, count, k, eta, E.data() + begin,
                                     H.data() + begin);
      } else {
        radiate_block_lossless<false>(src, observers.data() + begin, count, k, eta, E.data() + begin,
                                      H.data() + begin);
      }
    });
    return;
  }

  const cplx k = medium.k;
  const cplx eta = medium.eta;
  const cplx inv_eta2 = 1.0 / (eta * eta);
  parallel_for(observers.size(), workers, [&](std::size_t o) {
    const Vec3 r = observers[o];
    CVec3 e{}, h{};
    for (std::size_t s = 0; s < ns; ++s) {
      const Vec3 Rv = r - source_points[s];
      const double R = std::sqrt(Rv.norm2());
      if (R < kSingularDistance) {
        throw NumericalError("radiate: singular kernel, observer coincides with a source centroid");
      }
      const KernelTerms t = kernel_terms(R, k, eta, source_areas[s]);
      const CVec3& j = J[s];
      const cplx jr = dot(j, Rv);
      e += j * t.a + CVec3(Rv) * (t.b * jr);
      h += cross(j, Rv) * t.c;
      if (magnetic) {
        const CVec3& m = M[s];
        const cplx mr = dot(m, Rv);
        e -= cross(m, Rv) * t.c;
        h += (m * t.a + CVec3(Rv) * (t.b * mr)) * inv_eta2;
      }
    }
    E[o] += e;
    H[o] += h;
  });
}

std::vector<FieldSample> radiate(const CurrentSheet& sources, std::span<const Vec3> observers,
                                 const Propagation& medium, std::size_t workers) {
  if (!sources.mesh) throw ValidationError("radiate: current sheet has no mesh");
  const auto& facets = sources.mesh->facets;
  std::vector<Vec3> pts;
  std::vector<double> areas;
  pts.reserve(facets.size());
  areas.reserve(facets.size());
  for (const auto& f : facets) {
    pts.push_back(f.centroid);
    areas.push_back(f.area);
  }
  std::vector<CVec3> E(observers.size()), H(observers.size());
  accumulate_radiation(pts, areas, sources.J, sources.M, observers, medium, E, H, workers);
  std::vector<FieldSample> out(observers.size());
  for (std::size_t i = 0; i < observers.size(); ++i) out[i] = {observers[i], E[i], H[i]};
  return out;
}

cplx transmitted_kz(double sin_theta, cplx eps1, cplx eps2) {
  cplx kz = std::sqrt(eps2 - eps1 * (sin_theta * sin_theta));
  // Root with Re(kz) > Im(kz). For a real transverse wavenumber this is the
  // decaying / forward branch (Im <= 0); when medium 1 is lossy it stays the
  // root continuous with it instead of jumping to a backward wave.
  if (kz.real() - kz.imag() < 0.0 || (kz.real() - kz.imag() == 0.0 && kz.real() < 0.0)) kz = -kz;
  return kz;
}

Reflection fresnel(double theta_inc, const ComplexPermittivity& eps1, const ComplexPermittivity& eps2) {
  const cplx e1 = eps1.value(), e2 = eps2.value();
  const cplx kz1 = std::sqrt(e1) * std::cos(theta_inc);
  const cplx kz2 = transmitted_kz(std::sin(theta_inc), e1, e2);
  return {(kz1 - kz2) / (kz1 + kz2), (e1 * kz2 - e2 * kz1) / (e1 * kz2 + e2 * kz1)};
}

InducedCurrent meca(const CVec3& E, const CVec3& H, const Vec3& normal, cplx eta1,
                    const ComplexPermittivity& outer, const Medium& inner) {
  const Vec3 S = cross(E, conj(H)).real();
  const double s_norm = S.norm();
  if (s_norm == 0.0 || !std::isfinite(s_norm)) return {};
  const Vec3 k_hat = S / s_norm;
  double cos_t = -dot(normal, k_hat);
  if (cos_t <= 0.0) return {};  // shadowed
  cos_t = std::min(cos_t, 1.0);
  const double theta = std::acos(cos_t);

  Vec3 e_te = cross(k_hat, normal);
  if (e_te.norm() > 1e-10) {
    e_te = e_te.normalized();
  } else {
    // Normal incidence: plane of incidence undefined, take the E polarisation.
    const CVec3 Et = E - CVec3(normal) * dot(E, normal);
    const cplx comps[3] = {Et.x, Et.y, Et.z};
    const cplx* dominant = std::max_element(comps, comps + 3, [](cplx a, cplx b) { return std::abs(a) < std::abs(b); });
    Vec3 v{};
    if (std::abs(*dominant) > 0.0) {
      const cplx rot = std::conj(*dominant) / std::abs(*dominant);
      v = (Et * rot).real();
      v = v - normal * dot(v, normal);
    }
    if (v.norm() < 1e-12) {
      v = std::abs(normal.x) < 0.9 ? cross(normal, Vec3{1, 0, 0}) : cross(normal, Vec3{0, 1, 0});
    }
    e_te = v.normalized();
  }
  const Vec3 e_tm = cross(e_te, k_hat);
  const cplx E_te = dot(E, e_te);
  const cplx E_tm = dot(E, e_tm);

  Reflection r{-1.0, -1.0};
  if (!inner.pec) r = fresnel(theta, outer, inner.eps);

  InducedCurrent out;
  out.J = (CVec3(e_te) * (E_te * cos_t * (1.0 - r.te)) +
           CVec3(cross(normal, e_te)) * (E_tm * (1.0 - r.tm))) / eta1;
  if (!inner.pec) {
    out.M = CVec3(cross(e_te, normal)) * (E_te * (1.0 + r.te)) +
            CVec3(e_te) * (E_tm * cos_t * (1.0 + r.tm));
  }
  return out;
}

CurrentSheet induce_currents(std::span<const FieldSample> incident,
                             std::shared_ptr<const SurfaceMesh> surface,
                             const PhysicalConstants& constants, const ComplexPermittivity& outer,
                             const Medium& inner, bool flip_normals) {
  if (!surface) throw ValidationError("induce_currents: no surface");
  if (incident.size() != surface->size()) {
    throw ValidationError("induce_currents: need one field sample per facet");
  }
  const cplx eta1 = constants.eta0 / std::sqrt(outer.value());
  CurrentSheet sheet(surface);
  for (std::size_t i = 0; i < surface->size(); ++i) {
    Vec3 n = surface->facets[i].normal;
    if (std::abs(n.norm() - 1.0) > 1e-9) throw ValidationError("induce_currents: non-unit facet normal");
    if (flip_normals) n = -n;
    const auto c = meca(incident[i].E, incident[i].H, n, eta1, outer, inner);
    sheet.J[i] = c.J;
    sheet.M[i] = c.M;
  }
  if (inner.pec) sheet.M.clear();
  return sheet;
}

// ---------------------------------------------------------------------------

namespace {

std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

enum Kernel { kUU, kVV, kUV, kNU, kNV, kCU, kCV, kCN, kKernelCount };

}  // namespace

struct LatticePropagator::Impl {
  int nu{}, nv{}, Nu{}, Nv{};
  Vec3 u, v, n;
  cplx inv_eta2;
  // spectra[b][a][kernel]: observer sublattice b, source sublattice a.
  std::vector<cplx> spectra[2][2][kKernelCount];
  fftw_plan forward{}, backward{};

  std::size_t size() const { return static_cast<std::size_t>(Nu) * Nv; }
  void fft(std::vector<cplx>& data, bool inverse) const {
    auto* p = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(inverse ? backward : forward, p, p);
  }
};

bool LatticePropagator::compatible(const StructuredGrid& a, const StructuredGrid& b) {
  const double tol = 1e-9;
  if (a.nu != b.nu || a.nv != b.nv) return false;
  if (std::abs(a.du - b.du) > tol || std::abs(a.dv - b.dv) > tol) return false;
  if ((a.u - b.u).norm() > tol || (a.v - b.v).norm() > tol) return false;
  const Vec3 d = b.origin - a.origin;
  if (std::abs(dot(d, a.u)) > tol || std::abs(dot(d, a.v)) > tol) return false;
  return std::abs(dot(d, a.normal())) > kSingularDistance;
}

LatticePropagator::LatticePropagator(const StructuredGrid& source, const StructuredGrid& observer,
                                     const Propagation& medium)
    : impl_(std::make_unique<Impl>()) {
  if (!compatible(source, observer)) {
    throw ValidationError("LatticePropagator: grids are not congruent parallel lattices");
  }
  auto& m = *impl_;
  m.nu = source.nu;
  m.nv = source.nv;
  m.Nu = 2 * m.nu;
  m.Nv = 2 * m.nv;
  m.u = source.u;
  m.v = source.v;
  m.n = source.normal();
  m.inv_eta2 = 1.0 / (medium.eta * medium.eta);
  const double dn = dot(observer.origin - source.origin, m.n);
  const double area = 0.5 * source.du * source.dv;

  {
    std::lock_guard lock(fftw_plan_mutex());
    std::vector<cplx> scratch(m.size());
    auto* p = reinterpret_cast<fftw_complex*>(scratch.data());
    m.forward = fftw_plan_dft_2d(m.Nv, m.Nu, p, p, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    m.backward = fftw_plan_dft_2d(m.Nv, m.Nu, p, p, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
  }

  const double fu[2] = {2.0 / 3.0, 1.0 / 3.0};
  const double fv[2] = {1.0 / 3.0, 2.0 / 3.0};
  for (int b = 0; b < 2; ++b) {
    for (int a = 0; a < 2; ++a) {
      auto& ks = m.spectra[b][a];
      for (auto& k : ks) k.assign(m.size(), cplx{});
      for (int dj = -(m.nv - 1); dj <= m.nv - 1; ++dj) {
        for (int di = -(m.nu - 1); di <= m.nu - 1; ++di) {
          const double Ru = (di + fu[b] - fu[a]) * source.du;
          const double Rv = (dj + fv[b] - fv[a]) * source.dv;
          const double R = std::sqrt(Ru * Ru + Rv * Rv + dn * dn);
          const auto t = kernel_terms(R, medium.k, medium.eta, area);
          const std::size_t idx = static_cast<std::size_t>((dj + m.Nv) % m.Nv) * m.Nu + (di + m.Nu) % m.Nu;
          ks[kUU][idx] = t.a + t.b * (Ru * Ru);
          ks[kVV][idx] = t.a + t.b * (Rv * Rv);
          ks[kUV][idx] = t.b * (Ru * Rv);
          ks[kNU][idx] = t.b * (dn * Ru);
          ks[kNV][idx] = t.b * (dn * Rv);
          ks[kCU][idx] = t.c * Ru;
          ks[kCV][idx] = t.c * Rv;
          ks[kCN][idx] = t.c * dn;
        }
      }
      for (auto& k : ks) m.fft(k, false);
    }
  }
}

LatticePropagator::~LatticePropagator() {
  if (!impl_) return;
  std::lock_guard lock(fftw_plan_mutex());
  fftw_destroy_plan(impl_->forward);
  fftw_destroy_plan(impl_->backward);
}

void LatticePropagator::apply(std::span<const CVec3> J, std::span<const CVec3> M, std::span<CVec3> E,
                              std::span<CVec3> H) const {
  const auto& m = *impl_;
  const std::size_t cells = static_cast<std::size_t>(m.nu) * m.nv;
  if (J.size() != 2 * cells || (!M.empty() && M.size() != 2 * cells) || E.size() != 2 * cells ||
      H.size() != 2 * cells) {
    throw ValidationError("LatticePropagator: array sizes do not match the grid");
  }
  const bool magnetic = !M.empty();
  // Source spectra per sublattice: Ju, Jv, Mu, Mv.
  std::vector<cplx> src[2][4];
  for (int a = 0; a < 2; ++a) {
    for (int c = 0; c < 4; ++c) src[a][c].assign(m.size(), cplx{});
    for (int j = 0; j < m.nv; ++j) {
      for (int i = 0; i < m.nu; ++i) {
        const std::size_t f = 2 * (static_cast<std::size_t>(j) * m.nu + i) + a;
        const std::size_t idx = static_cast<std::size_t>(j) * m.Nu + i;
        src[a][0][idx] = dot(J[f], m.u);
        src[a][1][idx] = dot(J[f], m.v);
        if (magnetic) {
          src[a][2][idx] = dot(M[f], m.u);
          src[a][3][idx] = dot(M[f], m.v);
        }
      }
    }
    for (int c = 0; c < (magnetic ? 4 : 2); ++c) m.fft(src[a][c], false);
  }

  const double scale = 1.0 / static_cast<double>(m.size());
  for (int b = 0; b < 2; ++b) {
    std::vector<cplx> out[6];
    for (auto& o : out) o.assign(m.size(), cplx{});
    for (int a = 0; a < 2; ++a) {
      const auto& K = m.spectra[b][a];
      const auto& Ju = src[a][0];
      const auto& Jv = src[a][1];
      for (std::size_t q = 0; q < m.size(); ++q) {
        out[0][q] += K[kUU][q] * Ju[q] + K[kUV][q] * Jv[q];
        out[1][q] += K[kUV][q] * Ju[q] + K[kVV][q] * Jv[q];
        out[2][q] += K[kNU][q] * Ju[q] + K[kNV][q] * Jv[q];
        out[3][q] += K[kCN][q] * Jv[q];
        out[4][q] -= K[kCN][q] * Ju[q];
        out[5][q] += K[kCV][q] * Ju[q] - K[kCU][q] * Jv[q];
      }
      if (magnetic) {
        const auto& Mu = src[a][2];
        const auto& Mv = src[a][3];
        for (std::size_t q = 0; q < m.size(); ++q) {
          out[0][q] -= K[kCN][q] * Mv[q];
          out[1][q] += K[kCN][q] * Mu[q];
          out[2][q] -= K[kCV][q] * Mu[q] - K[kCU][q] * Mv[q];
          out[3][q] += (K[kUU][q] * Mu[q] + K[kUV][q] * Mv[q]) * m.inv_eta2;
          out[4][q] += (K[kUV][q] * Mu[q] + K[kVV][q] * Mv[q]) * m.inv_eta2;
          out[5][q] += (K[kNU][q] * Mu[q] + K[kNV][q] * Mv[q]) * m.inv_eta2;
        }
      }
    }
    for (auto& o : out) m.fft(o, true);
    for (int j = 0; j < m.nv; ++j) {
      for (int i = 0; i < m.nu; ++i) {
        const std::size_t idx = static_cast<std::size_t>(j) * m.Nu + i;
        const std::size_t f = 2 * (static_cast<std::size_t>(j) * m.nu + i) + b;
        E[f] += (CVec3(m.u) * out[0][idx] + CVec3(m.v) * out[1][idx] + CVec3(m.n) * out[2][idx]) * scale;
        H[f] += (CVec3(m.u) * out[3][idx] + CVec3(m.v) * out[4][idx] + CVec3(m.n) * out[5][idx]) * scale;
      }
    }
  }
}

}  // namespace reflectsim
