#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>

#include "reflectsim/constants.hpp"
#include "reflectsim/errors.hpp"
#include "reflectsim/go_forward.hpp"
#include "reflectsim/po_imager.hpp"

using namespace reflectsim;

namespace {

const double kK0 = PhysicalConstants::at(24.16).k0;

// Independent oracle: solve the boundary-value problem for up/down waves in
// every finite layer. psi is E_y (TE) or H_y (TM); psi and psi'/p are
// continuous with p = 1 (TE) or eps (TM). Returns the tangential-E reflection.
cplx wave_matrix_gamma(const TLStack& st, double theta, Mode mode) {
  const double s = std::sin(theta);
  auto kz = [&](cplx eps) {
    cplx k = std::sqrt(eps - s * s);
    if (k.imag() > 0 || (k.imag() == 0 && k.real() < 0)) k = -k;
    return kK0 * k;
  };
  const std::size_t L = st.layers.size();
  const std::size_t F = L - 2;  // finite layers
  const int n = static_cast<int>(1 + 2 * F);
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(n, n);
  Eigen::VectorXcd b = Eigen::VectorXcd::Zero(n);
  auto p_of = [&](cplx eps) { return mode == Mode::TE ? cplx{1.0} : eps; };
  // unknown index: B0 -> 0, A_i -> 2i-1, B_i -> 2i
  int row = 0;
  for (std::size_t i = 0; i + 1 < L - 1 || (i == 0 && F == 0); ++i) {
    // interface between layer i (bottom) and layer i+1 (top)
    const cplx ei = st.layers[i].eps.value(), en = st.layers[i + 1].eps.value();
    const cplx ki = kz(ei), kn = kz(en);
    const cplx pi = p_of(ei), pn = p_of(en);
    cplx ea = 1.0, eb = 1.0;
    if (i > 0) {
      ea = std::exp(-kJ * ki * st.layers[i].thickness);
      eb = std::exp(kJ * ki * st.layers[i].thickness);
    }
    // psi continuity
    if (i == 0) {
      A(row, 0) = 1.0;
      b(row) -= 1.0;
    } else {
      A(row, 2 * i - 1) = ea;
      A(row, 2 * i) = eb;
    }
    A(row, 2 * (i + 1) - 1) = -1.0;
    A(row, 2 * (i + 1)) = -1.0;
    ++row;
    // psi'/p continuity
    const cplx fi = -kJ * ki / pi, fn = -kJ * kn / pn;
    if (i == 0) {
      A(row, 0) = -fi;
      b(row) -= fi;
    } else {
      A(row, 2 * i - 1) = fi * ea;
      A(row, 2 * i) = -fi * eb;
    }
    A(row, 2 * (i + 1) - 1) = -fn;
    A(row, 2 * (i + 1)) = fn;
    ++row;
  }
  // conductor at the bottom of the last finite layer
  const auto& last = st.layers[L - 2];
  const cplx kl = kz(last.eps.value());
  const cplx ea = std::exp(-kJ * kl * last.thickness), eb = std::exp(kJ * kl * last.thickness);
  const int ia = static_cast<int>(2 * F - 1), ib = static_cast<int>(2 * F);
  if (mode == Mode::TE) {
    A(row, ia) = ea;
    A(row, ib) = eb;
  } else {
    A(row, ia) = ea;
    A(row, ib) = -eb;
  }
  const Eigen::VectorXcd x = A.fullPivLu().solve(b);
  return mode == Mode::TE ? x(0) : -x(0);
}

double deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace

TEST_CASE("four-layer stack matches the wave-matrix oracle") {
  const auto st = TLStack::slab_on_conductor({3.0, 0.0}, 37.0, 1.0);
  REQUIRE(st.layers.size() == 4);
  for (Mode m : {Mode::TE, Mode::TM}) {
    CHECK(std::abs(tl_reflection(st, 0.0, m, kK0) - wave_matrix_gamma(st, 0.0, m)) < 1e-10);
  }
  for (double th : {0.2, 0.6, 1.1}) {
    for (auto eps : {ComplexPermittivity{3.0, 0.01}, ComplexPermittivity{8.0, 0.0}, ComplexPermittivity{4.0, 0.2}}) {
      for (double gap : {0.0, 1.0}) {
        const auto s2 = TLStack::slab_on_conductor(eps, 23.0, gap);
        for (Mode m : {Mode::TE, Mode::TM}) {
          CHECK(std::abs(tl_reflection(s2, th, m, kK0) - wave_matrix_gamma(s2, th, m)) < 1e-10);
        }
      }
    }
  }
}

TEST_CASE("conductor and thin-slab limits") {
  for (double th : {0.0, 0.4, 1.2}) {
    for (Mode m : {Mode::TE, Mode::TM}) {
      CHECK(tl_reflection(TLStack::slab_on_conductor({5.0, 0.3}, 0.0), th, m, kK0) == cplx{-1.0, 0.0});
    }
  }
  // half guided wavelength: slab is invisible
  const double T = (kTwoPi / kK0) / (2.0 * std::sqrt(4.0));
  const cplx g = tl_reflection(TLStack::slab_on_conductor({4.0, 0.0}, T), 0.0, Mode::TE, kK0);
  CHECK(std::abs(g - cplx{-1.0, 0.0}) < 1e-12);
}

TEST_CASE("lossless stacks over a conductor are unimodular") {
  for (double eps : {1.5, 3.0, 8.0}) {
    for (double T = 0.5; T < 60; T += 3.7) {
      for (double th = 0; th < 1.5; th += 0.05) {
        for (Mode m : {Mode::TE, Mode::TM}) {
          CHECK(std::abs(std::abs(tl_reflection(TLStack::slab_on_conductor({eps, 0}, T, 1.0), th, m, kK0)) - 1.0) <
                1e-9);
        }
      }
    }
  }
}

TEST_CASE("TE and TM coincide at normal incidence") {
  for (auto eps : {ComplexPermittivity{8, 0}, ComplexPermittivity{2, 0}, ComplexPermittivity{4, 0.2}}) {
    const auto st = TLStack::slab_on_conductor(eps, 31.0, 1.0);
    CHECK(std::abs(tl_reflection(st, 0.0, Mode::TE, kK0) - tl_reflection(st, 0.0, Mode::TM, kK0)) < 1e-12);
  }
}

TEST_CASE("reflection magnitude is continuous in angle") {
  const TLStack stacks[] = {TLStack::slab_on_conductor({8, 0}, 20), TLStack::slab_on_conductor({2, 0}, 40),
                            TLStack::slab_on_conductor({4, 0.2}, 40), TLStack::slab_on_conductor({3, 0.01}, 37, 1)};
  for (const auto& st : stacks) {
    for (Mode m : {Mode::TE, Mode::TM}) {
      double prev = std::abs(tl_reflection(st, 0.0, m, kK0)), worst = 0;
      for (int i = 1; i <= 800; ++i) {
        const double g = std::abs(tl_reflection(st, i * 0.1 * kPi / 180.0, m, kK0));
        worst = std::max(worst, std::abs(g - prev));
        prev = g;
      }
      CHECK(worst < 0.01);
    }
  }
}

TEST_CASE("stack validation") {
  TLStack s;
  s.layers = {{0, kAir, false}};
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.layers = {{0, {2, 0}, false}, {0, kAir, true}};
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.layers = {{0, kAir, false}, {0, kAir, true}, {3, {2, 0}, false}, {0, kAir, true}};
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("ray geometry") {
  const Scene sc = build_scene(default_config(Scale::Reduced));
  GoModel go(sc);
  const Vec3 focus{500, 920, 780};

  SUBCASE("incidence angle from the patch to focus direction") {
    const auto r = go.trace_ray(0, 17, focus, 20);
    const Vec3 d = (focus - sc.faras[0].array.patch_centers[17]).normalized();
    CHECK(r.theta == doctest::Approx(std::acos(d.z)).epsilon(1e-12));
    CHECK(r.hit.z == doctest::Approx(sc.plate.z_bg - 20));
    CHECK(r.r2 == doctest::Approx(distance(r.hit, sc.faras[0].array.patch_centers[17])));
  }
  SUBCASE("zero thickness lands on the plate") {
    const auto r = go.trace_ray(1, 3, focus, 0);
    CHECK(r.hit.z == doctest::Approx(sc.plate.z_bg));
  }
  SUBCASE("retro-reflection below a patch") {
    const std::size_t m = 40;
    const Vec3 c = sc.faras[0].array.patch_centers[m];
    const auto r = go.trace_ray(0, m, {c.x, c.y, 700}, 10);
    CHECK(r.theta == doctest::Approx(0.0));
    REQUIRE(r.returned);
    CHECK(r.rx_feed == 0);
    CHECK(r.rx_patch == m);
  }
  SUBCASE("ray count conservation") {
    for (double T : {0.0, 20.0, 55.0}) {
      const auto b = go.trace({480, 900, 760}, T);
      std::size_t total = 0;
      for (const auto& f : sc.faras) total += f.array.count();
      CHECK(b.rays.size() + b.dropped == total);
      CHECK(!b.rays.empty());
    }
  }
}

TEST_CASE("matched absorber returns nothing") {
  const Scene sc = build_scene(default_config(Scale::Reduced));
  GoModel go(sc);
  TLStack matched;
  matched.layers = {{0, kAir, false}, {0, kAir, false}};
  const auto b = go.trace({500, 920, 780}, 20);
  CHECK(go.predict(b, matched) == cplx{0.0, 0.0});
}

TEST_CASE("prediction is deterministic and the bare plate is thickness independent in phase") {
  const Scene sc = build_scene(default_config(Scale::Reduced));
  GoModel go(sc);
  const cplx a = go.predict_received({500, 920, 780}, {8, 0}, 20);
  const cplx b = go.predict_received({500, 920, 780}, {8, 0}, 20);
  CHECK(a == b);
  // eps = 1 slab is air: identical to the plate with no slab
  const cplx air = go.predict_received({500, 920, 780}, kAir, 0);
  CHECK(std::abs(go.predict(go.trace({500, 920, 780}, 0), kAir) - air) == 0.0);
  CHECK_THROWS_AS(go.predict_received({500, 920, 780}, {8, 0}, -1), ValidationError);
}

TEST_CASE("ambiguity pair gives distinct near-field traces") {
  const Scene sc = build_scene(default_config(Scale::Reduced));
  GoModel go(sc);
  double worst = 0, peak = 0;
  for (double z = 600; z <= 1000; z += 10) {
    const cplx e1 = go.predict_received({500, 920, z}, {8, 0}, 20);
    const cplx e2 = go.predict_received({500, 920, z}, {2, 0}, 40);
    worst = std::max(worst, std::abs(std::abs(e1) - std::abs(e2)));
    peak = std::max(peak, std::abs(e1));
  }
  MESSAGE("max relative magnitude difference " << worst / peak);
  CHECK(worst / peak > 0.05);
}

TEST_CASE("normalized GO agrees with PO for the lossy slab") {
  const auto base = default_config(Scale::Reduced);
  const Scene bare = build_scene(without_target(base));
  PoImager cal(bare, {3, 0});
  PoImager po(build_scene(with_target(base, {4.0, 0.2}, 40)), {3, 0});
  GoModel go(bare);
  const Vec3 ref{500, 920, bare.plate.z_bg};
  const cplx e0 = cal.run_focus(ref).total;
  const cplx g0 = go.predict_received(ref, kAir, 0);
  for (double z : {750.0, 760.0, 770.0}) {
    const cplx e = po.run_focus({500, 920, z}).total / e0;
    const cplx g = go.predict_received({500, 920, z}, {4.0, 0.2}, 40) / g0;
    CHECK(std::abs(std::abs(g) / std::abs(e) - 1.0) < 0.15);
    CHECK(std::abs(deg(std::arg(g / e))) < 20.0);
  }
}

TEST_CASE("thickness sweep matches per-point prediction") {
  const Scene sc = build_scene(default_config(Scale::Reduced));
  for (double gap : {0.0, 1.0}) {
    GoModel go(sc, {Spreading::Verbatim, gap});
    const std::vector<double> ts{0, 7, 20, 37, 40};
    const Vec3 f{505, 915, 765};
    const auto rays = go.trace_sweep(f, ts);
    for (auto eps : {ComplexPermittivity{8, 0}, ComplexPermittivity{3, 0.01}, ComplexPermittivity{4, 0.2}}) {
      const auto v = go.predict_sweep(rays, eps);
      for (std::size_t t = 0; t < ts.size(); ++t) {
        const cplx ref = go.predict_received(f, eps, ts[t]);
        CHECK(std::abs(v[t] - ref) < 1e-12 * std::abs(ref));
      }
    }
  }
}
