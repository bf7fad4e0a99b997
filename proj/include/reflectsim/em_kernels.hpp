#pragma once

#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "reflectsim/mesh.hpp"
#include "reflectsim/scene.hpp"
#include "reflectsim/vec3.hpp"

namespace reflectsim {

// Wavenumber and wave impedance of a homogeneous medium. Lossy media give a
// complex k with Im(k) < 0, so e^{-jkR} decays.
struct Propagation {
  cplx k;
  cplx eta;

  static Propagation free_space(const PhysicalConstants& c) { return {c.k0, c.eta0}; }
  static Propagation in(const PhysicalConstants& c, const ComplexPermittivity& eps);
};

struct CurrentSheet {
  std::shared_ptr<const SurfaceMesh> mesh;
  std::vector<CVec3> J;  // A/m, one per facet
  std::vector<CVec3> M;  // V/m, one per facet; empty means identically zero

  CurrentSheet() = default;
  explicit CurrentSheet(std::shared_ptr<const SurfaceMesh> m)
      : mesh(std::move(m)), J(mesh->size()), M(mesh->size()) {}

  std::size_t size() const { return J.size(); }
  bool has_magnetic() const { return !M.empty(); }
};

struct FieldSample {
  Vec3 position;
  CVec3 E;  // V/m
  CVec3 H;  // A/m
};

// Minimum source-observer separation accepted by the radiation kernels, mm.
inline constexpr double kSingularDistance = 1e-6;

// Near-field radiation integral by centroid quadrature: every facet is a
// point source carrying J*area and M*area. Throws NumericalError when an
// observer coincides with a source centroid.
std::vector<FieldSample> radiate(const CurrentSheet& sources, std::span<const Vec3> observers,
                                 const Propagation& medium, std::size_t workers = 1);

// Raw form used by the hot loops: accumulates into E and H (sized like
// observers). M may be empty.
void accumulate_radiation(std::span<const Vec3> source_points, std::span<const double> source_areas,
                          std::span<const CVec3> J, std::span<const CVec3> M,
                          std::span<const Vec3> observers, const Propagation& medium,
                          std::span<CVec3> E, std::span<CVec3> H, std::size_t workers = 1);

struct Reflection {
  cplx te;
  cplx tm;
};

// Interface reflection coefficients from medium 1 (incident) into medium 2,
// equal permeabilities. TM is referred to the tangential electric field, so
// both coefficients are -1 on a conductor and coincide at normal incidence.
Reflection fresnel(double theta_inc, const ComplexPermittivity& eps1, const ComplexPermittivity& eps2);

// Transmitted-side normalised k_z: sqrt(eps2 - eps1 sin^2) on the decaying branch.
cplx transmitted_kz(double sin_theta, cplx eps1, cplx eps2);

// MECA equivalent currents on a surface from the incident field sampled at
// each facet centroid. Facet normals must face the incident medium (`outer`);
// flip_normals uses the opposite orientation. Facets whose incident Poynting
// vector does not point into the surface are shadowed and carry no current.
CurrentSheet induce_currents(std::span<const FieldSample> incident,
                             std::shared_ptr<const SurfaceMesh> surface,
                             const PhysicalConstants& constants, const ComplexPermittivity& outer,
                             const Medium& inner, bool flip_normals = false);

// Single-facet MECA evaluation, exposed for tests and the patch model.
struct InducedCurrent {
  CVec3 J;
  CVec3 M;
};
InducedCurrent meca(const CVec3& E, const CVec3& H, const Vec3& normal, cplx eta1,
                    const ComplexPermittivity& outer, const Medium& inner);

// Radiation between two congruent, parallel structured grids (same axes,
// spacing and counts, origins separated along the normal only) evaluated as a
// 2-D convolution with FFTs. Produces the same centroid-quadrature sums as
// radiate() for tangential currents.
class LatticePropagator {
 public:
  LatticePropagator(const StructuredGrid& source, const StructuredGrid& observer,
                    const Propagation& medium);
  ~LatticePropagator();
  LatticePropagator(const LatticePropagator&) = delete;
  LatticePropagator& operator=(const LatticePropagator&) = delete;

  static bool compatible(const StructuredGrid& a, const StructuredGrid& b);

  // Fields at observer facets (grid facet order) from J, M on source facets.
  void apply(std::span<const CVec3> J, std::span<const CVec3> M, std::span<CVec3> E,
             std::span<CVec3> H) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace reflectsim
