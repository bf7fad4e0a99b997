#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "reflectsim/em_kernels.hpp"
#include "reflectsim/scene.hpp"

namespace reflectsim {

// One bit per patch: 1 means the patch adds a pi phase shift.
struct PhaseMask {
  Vec3 focus;
  std::size_t feed{0};
  std::vector<std::uint8_t> bits;

  std::size_t size() const { return bits.size(); }
  double phase(std::size_t m) const;  // 0 or pi
  // e^{j*phase}: exactly +1 or -1
  double factor(std::size_t m) const { return bits[m] ? -1.0 : 1.0; }
};

struct FocusGrid {
  std::vector<Vec3> points;
};

// Validates every point against the scene RoI; the error names the violated bound.
FocusGrid make_focus_grid(const Scene& scene, std::vector<Vec3> points);

// True when mod(phase, 2pi) lies strictly inside (pi/2, 3pi/2).
bool needs_flip(double path_phase);

PhaseMask binary_phase(const HornFeed& feed, const Reflectarray& array, const Vec3& focus, double k0,
                       std::size_t feed_index = 0);

// Per-patch currents (one entry per patch) with the mask applied.
std::vector<CVec3> apply_mask(std::span<const CVec3> patch_currents, const PhaseMask& mask);

// Facet-level sheet on the array (two facets per patch).
CurrentSheet apply_mask(const CurrentSheet& currents, const PhaseMask& mask);

// Fraction of patches whose compensated two-leg phase lies in (-pi/2, pi/2] mod 2pi.
double focus_quality(const HornFeed& feed, const Reflectarray& array, const PhaseMask& mask, double k0);

void write_mask_csv(std::ostream& out, const PhaseMask& mask);

}  // namespace reflectsim
