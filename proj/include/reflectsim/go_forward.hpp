#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "reflectsim/scene.hpp"

namespace reflectsim {

enum class Mode { TE, TM };

struct Layer {
  double thickness{0};  // mm; ignored for the first (incidence) layer and a semi-infinite last layer
  ComplexPermittivity eps{kAir};
  bool pec{false};
};

// Planar stack seen from layer 0 (air). The last layer terminates the line:
// either a conductor or a semi-infinite dielectric.
struct TLStack {
  std::vector<Layer> layers;

  // air | slab | optional air gap | conductor
  static TLStack slab_on_conductor(ComplexPermittivity eps, double thickness, double gap = 0.0);
  void validate() const;
};

// Normalised z wavenumber sqrt(eps - sin^2) on the decaying branch.
cplx normalized_kz(cplx eps, double sin_theta);

cplx tl_reflection(const TLStack& stack, double theta_inc, Mode mode, double k0);

enum class Spreading {
  Verbatim,    // per-leg denominators exactly as printed
  Cumulative,  // 1/(total path length)
};

struct GoOptions {
  Spreading spreading{Spreading::Verbatim};
  double gap_mm{0.0};  // air gap between slab and plate in the layer model
};

struct RayPath {
  std::size_t feed{0}, patch{0};
  Vec3 hit;  // on the slab front plane
  double theta{0};
  bool returned{false};
  std::size_t rx_feed{0}, rx_patch{0};
  double r1{0}, r2{0}, r3{0}, r4{0}, r5{0};
  double w_te{0.5};  // share of the co-polarised ray carried by the TE mode
  cplx amplitude{};  // received amplitude per unit reflection coefficient
};

// All P*M rays for one focus point and thickness.
struct RayBundle {
  Vec3 focus;
  double thickness{0};
  std::vector<RayPath> rays;  // contributing rays, (p, m) order
  std::size_t dropped{0};
};

// Rays for one focus point over several thicknesses. The incidence angle and
// mode split depend only on the patch -> focus direction; the amplitudes
// (zero for dropped rays) depend on the thickness through the hit point.
struct SweepRays {
  Vec3 focus;
  std::vector<double> thickness;
  std::vector<double> sin_theta, cos_theta, w_te;  // per ray, (p, m) order
  std::vector<cplx> amplitude;                      // [t * rays + r]

  std::size_t rays() const { return sin_theta.size(); }
};

class GoModel {
 public:
  explicit GoModel(const Scene& scene, GoOptions options = {});

  const Scene& scene() const { return *scene_; }
  const GoOptions& options() const { return options_; }
  double front_z(double thickness) const { return scene_->plate.z_bg - options_.gap_mm - thickness; }

  RayPath trace_ray(std::size_t p, std::size_t m, const Vec3& focus, double thickness) const;
  RayBundle trace(const Vec3& focus, double thickness) const;

  cplx predict(const RayBundle& bundle, const TLStack& stack) const;
  cplx predict(const RayBundle& bundle, ComplexPermittivity eps) const;
  cplx predict_received(const Vec3& focus, ComplexPermittivity eps, double thickness) const;

  SweepRays trace_sweep(const Vec3& focus, std::span<const double> thickness) const;
  // Prediction for each thickness of the sweep (slab + gap + conductor).
  std::vector<cplx> predict_sweep(const SweepRays& rays, ComplexPermittivity eps) const;

 private:
  const Scene* scene_;
  GoOptions options_;
};

void write_trace_csv(std::ostream& out, std::span<const double> focus_z, std::span<const cplx> values);

}  // namespace reflectsim
