#pragma once

#include <numbers>

namespace reflectsim {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Speed of light in mm/ns, so k0 [rad/mm] = 2*pi*f[GHz]/c.
inline constexpr double kSpeedOfLightMmPerNs = 299.792458;
inline constexpr double kMu0 = 4.0e-7 * std::numbers::pi;  // H/m
inline constexpr double kFreeSpaceImpedance = kMu0 * 299792458.0;  // ohms

struct PhysicalConstants {
  double frequency_ghz{24.16};
  double k0{};          // rad/mm
  double eta0{};        // ohms
  double wavelength{};  // mm

  static PhysicalConstants at(double frequency_ghz);
};

inline PhysicalConstants PhysicalConstants::at(double frequency_ghz) {
  PhysicalConstants c;
  c.frequency_ghz = frequency_ghz;
  c.k0 = kTwoPi * frequency_ghz / kSpeedOfLightMmPerNs;
  c.eta0 = kFreeSpaceImpedance;
  c.wavelength = kTwoPi / c.k0;
  return c;
}

}  // namespace reflectsim
