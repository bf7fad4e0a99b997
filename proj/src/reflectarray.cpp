#include "reflectsim/reflectarray.hpp"

#include <cmath>
#include <ostream>

#include "reflectsim/constants.hpp"
#include "reflectsim/errors.hpp"

namespace reflectsim {

double PhaseMask::phase(std::size_t m) const { return bits.at(m) ? kPi : 0.0; }

FocusGrid make_focus_grid(const Scene& scene, std::vector<Vec3> points) {
  for (const auto& p : points) {
    const auto why = scene.roi.violation(p);
    if (!why.empty()) throw ValidationError("focus point outside the RoI: " + why);
  }
  return {std::move(points)};
}

bool needs_flip(double path_phase) {
  double r = std::fmod(path_phase, kTwoPi);
  if (r < 0) r += kTwoPi;
  return r > kPi / 2 && r < 3 * kPi / 2;
}

namespace {

double path_length(const HornFeed& feed, const Vec3& patch, const Vec3& focus) {
  return distance(feed.aperture_center, patch) + distance(patch, focus);
}

}  // namespace

PhaseMask binary_phase(const HornFeed& feed, const Reflectarray& array, const Vec3& focus, double k0,
                       std::size_t feed_index) {
  if (std::abs(dot(focus - array.center, array.normal)) < 1e-9) {
    throw ValidationError("binary_phase: focus lies on the array plane");
  }
  PhaseMask mask;
  mask.focus = focus;
  mask.feed = feed_index;
  mask.bits.resize(array.count());
  for (std::size_t m = 0; m < array.count(); ++m) {
    mask.bits[m] = needs_flip(k0 * path_length(feed, array.patch_centers[m], focus)) ? 1 : 0;
  }
  return mask;
}

std::vector<CVec3> apply_mask(std::span<const CVec3> patch_currents, const PhaseMask& mask) {
  if (patch_currents.size() != mask.size()) throw ValidationError("apply_mask: length mismatch");
  std::vector<CVec3> out(patch_currents.begin(), patch_currents.end());
  for (std::size_t m = 0; m < out.size(); ++m) {
    if (mask.bits[m]) out[m] = -out[m];
  }
  return out;
}

CurrentSheet apply_mask(const CurrentSheet& currents, const PhaseMask& mask) {
  if (currents.size() != 2 * mask.size()) throw ValidationError("apply_mask: length mismatch");
  CurrentSheet out = currents;
  for (std::size_t f = 0; f < out.size(); ++f) {
    if (mask.bits[f / 2]) out.J[f] = -out.J[f];
  }
  return out;
}

double focus_quality(const HornFeed& feed, const Reflectarray& array, const PhaseMask& mask, double k0) {
  std::size_t good = 0;
  for (std::size_t m = 0; m < array.count(); ++m) {
    double r = std::fmod(k0 * path_length(feed, array.patch_centers[m], mask.focus) - mask.phase(m), kTwoPi);
    if (r <= -kPi) r += kTwoPi;
    if (r > kPi) r -= kTwoPi;
    if (r > -kPi / 2 && r <= kPi / 2) ++good;
  }
  return array.count() ? static_cast<double>(good) / array.count() : 0.0;
}

void write_mask_csv(std::ostream& out, const PhaseMask& mask) {
  out << "patch,bit\n";
  for (std::size_t m = 0; m < mask.size(); ++m) out << m << ',' << int(mask.bits[m]) << '\n';
}

}  // namespace reflectsim
