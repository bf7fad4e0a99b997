#include "doctest.h"

#include <fftw3.h>

#include <cmath>
#include <sstream>

#include "reflectsim/constants.hpp"
#include "reflectsim/errors.hpp"
#include "reflectsim/go_forward.hpp"
#include "reflectsim/po_imager.hpp"

using namespace reflectsim;

namespace {

SceneConfig reduced() { return default_config(Scale::Reduced); }

double norm2(const std::vector<CVec3>& v) {
  double s = 0;
  for (const auto& x : v) s += std::norm(x.x) + std::norm(x.y) + std::norm(x.z);
  return std::sqrt(s);
}

double mag(const CVec3& v) { return std::sqrt(std::norm(v.x) + std::norm(v.y) + std::norm(v.z)); }

double deg(double r) { return r * 180.0 / kPi; }

// Exact reference for an infinite planar stack: angular spectrum of the
// incident field on a plane above the stack, TL reflection per plane wave,
// reaction with each receive field over that plane.
class SpectralReference {
 public:
  static constexpr int N = 512;        // padded FFT size
  static constexpr double D = 2.5;     // mm sample spacing

  explicit SpectralReference(const PoImager& im) : im_(im) {}

  cplx received(const Vec3& focus, const TLStack& stack, double z_top) const {
    const double gap = 5.0;
    std::vector<Field> inc;
    for (std::size_t p = 0; p < im_.scene().faras.size(); ++p) inc.push_back(incident(p, focus, z_top - gap));
    Field sum = inc[0];
    for (std::size_t p = 1; p < inc.size(); ++p) {
      for (int q = 0; q < N * N; ++q) {
        sum.E[q] += inc[p].E[q];
        sum.H[q] += inc[p].H[q];
      }
    }
    const Field sc = scatter(sum, stack, gap);
    cplx r{};
    for (const auto& rx : inc) {
      for (int q = 0; q < N * N; ++q) r += cross(sc.E[q], rx.H[q]).z - cross(rx.E[q], sc.H[q]).z;
    }
    return r;
  }

 private:
  struct Field {
    std::vector<CVec3> E, H;
  };

  static void fft(std::vector<cplx>& a, int sign) {
    auto* d = reinterpret_cast<fftw_complex*>(a.data());
    fftw_plan plan = fftw_plan_dft_2d(N, N, d, d, sign, FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }

  Field incident(std::size_t p, const Vec3& focus, double z0) const {
    const int M = N / 2;
    std::vector<Vec3> pts;
    for (int j = 0; j < M; ++j)
      for (int i = 0; i < M; ++i) pts.push_back({focus.x + (i - M / 2) * D, focus.y + (j - M / 2) * D, z0});
    const auto f = radiate(im_.array_sheet(p, focus), pts, Propagation::free_space(im_.scene().constants));
    Field g{std::vector<CVec3>(N * N), std::vector<CVec3>(N * N)};
    for (int j = 0; j < M; ++j) {
      for (int i = 0; i < M; ++i) {
        g.E[j * N + i] = f[j * M + i].E;
        g.H[j * N + i] = f[j * M + i].H;
      }
    }
    return g;
  }

  Field scatter(const Field& inc, const TLStack& st, double gap) const {
    const double k0 = im_.scene().constants.k0, eta0 = im_.scene().constants.eta0;
    std::vector<cplx> ex(N * N), ey(N * N);
    for (int q = 0; q < N * N; ++q) {
      ex[q] = inc.E[q].x;
      ey[q] = inc.E[q].y;
    }
    fft(ex, FFTW_FORWARD);
    fft(ey, FFTW_FORWARD);
    std::vector<cplx> c[6];
    for (auto& v : c) v.assign(N * N, cplx{});
    const double dk = kTwoPi / (N * D);
    for (int j = 0; j < N; ++j) {
      for (int i = 0; i < N; ++i) {
        const int q = j * N + i;
        const double kx = (i < N / 2 ? i : i - N) * dk, ky = (j < N / 2 ? j : j - N) * dk;
        const double kr = std::hypot(kx, ky);
        if (kr >= 0.999 * k0) continue;  // evanescent part ignored, 5 mm above the stack
        const double kz = std::sqrt(k0 * k0 - kr * kr);
        const double th = std::asin(kr / k0);
        const double ux = kr > 0 ? kx / kr : 1.0, uy = kr > 0 ? ky / kr : 0.0;
        const cplx ph = std::exp(cplx(0, -2 * kz * gap));
        const cplx etm = (ex[q] * ux + ey[q] * uy) * tl_reflection(st, th, Mode::TM, k0) * ph;
        const cplx ete = (-ex[q] * uy + ey[q] * ux) * tl_reflection(st, th, Mode::TE, k0) * ph;
        const cplx Ex = etm * ux - ete * uy, Ey = etm * uy + ete * ux;
        const cplx Ez = (kx * Ex + ky * Ey) / kz;  // upgoing wave, k = (kx, ky, -kz)
        c[0][q] = Ex;
        c[1][q] = Ey;
        c[2][q] = Ez;
        c[3][q] = (ky * Ez + kz * Ey) / (k0 * eta0);
        c[4][q] = (-kz * Ex - kx * Ez) / (k0 * eta0);
        c[5][q] = (kx * Ey - ky * Ex) / (k0 * eta0);
      }
    }
    for (auto& v : c) fft(v, FFTW_BACKWARD);
    const double s = 1.0 / (N * N);
    Field g{std::vector<CVec3>(N * N), std::vector<CVec3>(N * N)};
    for (int q = 0; q < N * N; ++q) {
      g.E[q] = CVec3{c[0][q], c[1][q], c[2][q]} * s;
      g.H[q] = CVec3{c[3][q], c[4][q], c[5][q]} * s;
    }
    return g;
  }

  const PoImager& im_;
};

}  // namespace

TEST_CASE("array focuses on the commanded point") {
  // full-size arrays: the spot is about a wavelength wide
  PoImager full(build_scene(without_target(default_config(Scale::Full))));
  PoImager im(build_scene(without_target(reduced())));
  const double lambda = im.scene().constants.wavelength;
  const Vec3 focus{500, 920, 800};
  const std::vector<Vec3> pts{focus,
                              focus + Vec3{3 * lambda, 0, 0},
                              focus - Vec3{3 * lambda, 0, 0},
                              focus + Vec3{0, 3 * lambda, 0},
                              focus - Vec3{0, 3 * lambda, 0}};
  for (std::size_t p = 0; p < 2; ++p) {
    const auto f = radiate(full.array_sheet(p, focus), pts, Propagation::free_space(im.scene().constants));
    for (std::size_t i = 1; i < pts.size(); ++i) CHECK(20 * std::log10(mag(f[0].E) / mag(f[i].E)) >= 10.0);
  }
  PsfSpec spec;
  const auto psf = im.psf(focus, spec);
  CHECK(distance(psf.peak_one_way, focus) <= lambda / 4);
  CHECK(distance(psf.peak_two_way, focus) <= lambda / 4);
}

TEST_CASE("single patch illumination is one radiation call") {
  auto cfg = without_target(reduced());
  for (auto& f : cfg.faras) f.side_mm = 7.0;
  const Scene sc = build_scene(cfg);
  REQUIRE(sc.faras[0].array.count() == 1);
  PoImager im(sc);
  const Vec3 focus{500, 920, 800};
  const auto& s = im.surfaces(500, 920);
  const auto ill = im.illuminate(0, focus, s);
  const auto direct = radiate(im.array_sheet(0, focus), s.body->centroids(), Propagation::free_space(sc.constants));
  bool identical = true;
  for (std::size_t i = 0; i < direct.size(); ++i) identical = identical && ill.E_body[i] == direct[i].E && ill.H_body[i] == direct[i].H;
  CHECK(identical);
}

TEST_CASE("illumination is linear in the feed current") {
  Scene sc = build_scene(with_target(reduced(), {4, 0.2}, 40));
  PoImager a(sc);
  for (auto& j : sc.faras[0].feed.current) j = j * 2.0;
  PoImager b(sc);
  const Vec3 focus{500, 920, 770};
  const auto& sa = a.surfaces(500, 920);
  const auto& sb = b.surfaces(500, 920);
  const auto fa = a.illuminate(0, focus, sa), fb = b.illuminate(0, focus, sb);
  double worst = 0;
  for (std::size_t i = 0; i < fa.E_obj.size(); ++i) worst = std::max(worst, mag(fb.E_obj[i] - fa.E_obj[i] * 2.0) / (2 * mag(fa.E_obj[i]) + 1e-300));
  CHECK(worst < 1e-12);
}

TEST_CASE("cascade") {
  PoImager im(build_scene(with_target(reduced(), {4, 0.2}, 40)));
  const auto& s = im.surfaces(500, 920);
  const auto ill = im.illuminate(0, {500, 920, 760}, s);

  SUBCASE("first order keeps the front-face currents") {
    const auto c1 = im.cascade(ill, s, 1);
    CHECK(c1.order_norms.size() == 1);
    const auto meca = induce_currents(
        [&] {
          std::vector<FieldSample> v;
          for (std::size_t i = 0; i < s.obj->size(); ++i) v.push_back({s.obj->facets[i].centroid, ill.E_obj[i], ill.H_obj[i]});
          return v;
        }(),
        s.obj, im.scene().constants, kAir, Medium::dielectric(s.eps));
    CHECK(c1.obj.J == meca.J);
    CHECK(c1.obj.M == meca.M);
    CHECK(norm2(c1.bot.J) == 0.0);
    CHECK_THROWS_AS(im.cascade(ill, s, 0), ValidationError);
  }

  SUBCASE("internal bounce in a lossy slab is strongly attenuated") {
    const auto c = im.cascade(ill, s, 2);
    REQUIRE(c.order_norms.size() == 2);
    const double ratio = c.order_norms[1] / c.order_norms[0];
    // plane wave at normal incidence: transmit, round trip, re-induce from inside
    const cplx n = std::sqrt(s.eps.value());
    const cplx r = (1.0 - n) / (1.0 + n);
    const double expect = std::abs((1.0 + r) * (1.0 + r) * n / (1.0 - r)) *
                          std::exp(2.0 * (im.scene().constants.k0 * n).imag() * 40.0);
    MESSAGE("first bounce ratio " << ratio << ", plane-wave estimate " << expect);
    CHECK(ratio < 0.1);
    CHECK(ratio == doctest::Approx(expect).epsilon(0.15));
  }
}

TEST_CASE("bare plate has body currents only") {
  PoImager im(build_scene(without_target(reduced())));
  const auto& s = im.surfaces(500, 920);
  CHECK(!s.has_slab());
  const auto c = im.cascade(im.illuminate(1, {500, 920, 800}, s), s, 3);
  CHECK(!c.obj.mesh);
  CHECK(c.body.M.empty());
  CHECK(norm2(c.body.J) > 0);
}

TEST_CASE("receive is linear and sums over feeds") {
  PoImager im(build_scene(with_target(reduced(), {8, 0}, 20)));
  const Vec3 focus{500, 920, 780};
  const auto run = im.run_focus(focus);
  REQUIRE(run.received.size() == 2);
  CHECK(run.total == run.received[0] + run.received[1]);

  auto zero = run.currents;
  for (auto* sh : {&zero.obj, &zero.body}) {
    for (auto& j : sh->J) j = CVec3{};
    for (auto& m : sh->M) m = CVec3{};
  }
  CHECK(im.receive(run.fields[0], zero) == cplx{0.0, 0.0});

  auto scaled = run.currents;
  const cplx alpha{0.3, -1.7};
  for (auto* sh : {&scaled.obj, &scaled.body}) {
    for (auto& j : sh->J) j = j * alpha;
    for (auto& m : sh->M) m = m * alpha;
  }
  CHECK(std::abs(im.receive(run.fields[1], scaled) - alpha * run.received[1]) < 1e-12 * std::abs(run.received[1]));

  // partitioned target currents: one cascade per feed
  const auto& s = im.surfaces(500, 920);
  const auto c0 = im.cascade(run.fields[0], s, 3), c1 = im.cascade(run.fields[1], s, 3);
  const cplx parts = im.receive(run.fields[0], c0) + im.receive(run.fields[0], c1);
  CHECK(std::abs(parts - run.received[0]) < 1e-10 * std::abs(run.received[0]));
}

TEST_CASE("reciprocity receive agrees with back-propagation at the focus") {
  PoImager im(build_scene(with_target(reduced(), {8, 0}, 20)));
  const Vec3 focus{500, 920, 780};
  const auto run = im.run_focus(focus);
  const auto& s = im.surfaces(500, 920);
  cplx bp{};
  for (std::size_t p = 0; p < 2; ++p) bp += im.back_propagate(p, focus, run.currents, s);
  MESSAGE("back-propagation / reciprocity " << std::abs(bp / run.total) << " at " << deg(std::arg(bp / run.total)) << " deg");
  CHECK(std::isfinite(std::abs(bp)));
  CHECK(std::abs(bp) > 0);
}

TEST_CASE("PO matches the exact layered-medium reference") {
  const auto base = reduced();
  PoImager bare(build_scene(without_target(base)));
  const SpectralReference ref(bare);
  const double z_bg = bare.scene().plate.z_bg;
  const Vec3 cal{500, 920, z_bg};
  const cplx s0 = ref.received(cal, TLStack::slab_on_conductor(kAir, 0), z_bg);
  const cplx p0 = bare.run_focus(cal).total;

  PoImager po(build_scene(with_target(base, {2, 0}, 40)));
  const Vec3 f{500, 920, 780};
  const cplx s = ref.received(f, TLStack::slab_on_conductor({2, 0}, 40), z_bg - 40) / s0;
  const cplx p = po.run_focus(f).total / p0;
  MESSAGE("exact " << std::abs(s) << " / " << deg(std::arg(s)) << " deg, PO " << std::abs(p) << " / " << deg(std::arg(p)));
  CHECK(std::abs(std::abs(p) / std::abs(s) - 1.0) < 0.05);
  CHECK(std::abs(deg(std::arg(p / s))) < 3.0);
}

TEST_CASE("profiles") {
  SUBCASE("bare plate images at the plate") {
    PoImager im(build_scene(without_target(reduced())));
    const auto img = im.reconstruct_profile({500}, {920}, 760, 840, 10);
    REQUIRE(img.z_imaging.size() == 1);
    CHECK(std::abs(img.z_at(0, 0) - im.scene().plate.z_bg) <= 10.0);
    CHECK(img.traces[0].size() == 9);
  }
  SUBCASE("scaling the feeds does not move the image") {
    Scene sc = build_scene(with_target(reduced(), {8, 0}, 20));
    PoImager a(sc);
    for (auto& f : sc.faras)
      for (auto& j : f.feed.current) j = j * cplx{-0.2, 3.0};
    PoImager b(sc);
    const auto ia = a.reconstruct_profile({500}, {920}, 740, 820, 20, 2);
    const auto ib = b.reconstruct_profile({500}, {920}, 740, 820, 20, 2);
    CHECK(ia.z_imaging == ib.z_imaging);
  }
  SUBCASE("errors and export") {
    PoImager im(build_scene(without_target(reduced())));
    CHECK_THROWS_AS(im.reconstruct_profile({500}, {920}, 700, 800, 0), ValidationError);
    CHECK_THROWS_AS(im.reconstruct_profile({500}, {920}, 700, 5000, 10), ValidationError);
    ProfileImage img;
    img.xs = {500};
    img.ys = {920};
    img.zs = {790, 800};
    img.z_imaging = {800};
    img.peak = {1.5};
    std::ostringstream out;
    write_profile_csv(out, img);
    CHECK(out.str() == "x_mm,y_mm,z_imaging_mm,peak_magnitude\n500,920,800,1.5\n");
    CHECK(profile_metadata_json(img, "abc", 3, 10).find("\"k_order\": 3") != std::string::npos);
  }
}

TEST_CASE("3-dB width") {
  std::vector<double> x, a;
  for (int i = -50; i <= 50; ++i) {
    x.push_back(i * 0.1);
    a.push_back(std::exp(-(i * 0.1) * (i * 0.1)));
  }
  // exp(-x^2) = 1/sqrt2 at x = sqrt(ln2 / 2)
  CHECK(three_db_width(x, a) == doctest::Approx(2 * std::sqrt(std::log(2.0) / 2)).epsilon(1e-3));
  const std::vector<double> flat(x.size(), 1.0);
  CHECK(std::isinf(three_db_width(x, flat)));
}
