#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "reflectsim/constants.hpp"
#include "reflectsim/mesh.hpp"
#include "reflectsim/vec3.hpp"

namespace reflectsim {

// eps_r = eps_real - j*eps_imag (e^{+jwt} convention).
struct ComplexPermittivity {
  double eps_real{1.0};
  double eps_imag{0.0};

  cplx value() const { return {eps_real, -eps_imag}; }
  bool operator==(const ComplexPermittivity&) const = default;
};

inline constexpr ComplexPermittivity kAir{1.0, 0.0};

void validate(const ComplexPermittivity& eps);

// A half-space behind an interface: either a dielectric or a perfect conductor.
struct Medium {
  bool pec{false};
  ComplexPermittivity eps{kAir};

  static Medium conductor() { return {true, kAir}; }
  static Medium dielectric(ComplexPermittivity e) { return {false, e}; }
};

struct HornFeed {
  Vec3 aperture_center;
  Vec3 boresight;     // unit, towards the paired array centre
  Vec3 polarization;  // unit, in the aperture plane
  double aperture_width{0};   // H-plane, along polarization x boresight
  double aperture_height{0};  // E-plane, along polarization
  SurfaceMesh aperture;
  std::vector<CVec3> current;  // J_inc per aperture facet, A/m
};

struct Reflectarray {
  Vec3 center;
  Vec3 normal{0, 0, 1};  // faces the feed and the RoI
  Vec3 u{1, 0, 0}, v{0, 1, 0};
  double side{0};
  double pitch{0};
  int per_side{0};
  std::vector<Vec3> patch_centers;
  // Two triangles per patch: facets 2m and 2m+1 belong to patch m.
  SurfaceMesh facets;

  std::size_t count() const { return patch_centers.size(); }
  // Patch whose centre is nearest to p (p projected on the array plane), or
  // nullopt outside the array square. Ties go to the lower index.
  std::optional<std::size_t> nearest_patch(const Vec3& p) const;
};

struct Fara {
  HornFeed feed;
  Reflectarray array;
};

struct DielectricSlab {
  Vec3 center;  // centre of the back face
  double extent_x{0}, extent_y{0};
  double thickness{0};
  ComplexPermittivity eps;
  double gap{0};  // air gap between the back face and the plate

  double back_z() const { return center.z; }
  double front_z() const { return center.z - thickness; }
};

struct Plate {
  double z_bg{800.0};
  double center_x{500.0}, center_y{920.0};
  double extent_x{600.0}, extent_y{600.0};
};

struct RoiBox {
  Vec3 min, max;
  bool contains(const Vec3& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z &&
           p.z <= max.z;
  }
  // Empty when inside, otherwise names the violated bound, e.g. "z > 1000".
  std::string violation(const Vec3& p) const;
};

// Plain-data scene description mirroring the JSON configuration file.
struct FaraConfig {
  std::array<double, 3> feed_center{};
  std::array<double, 2> aperture_mm{17.0, 12.5};
  std::array<double, 3> array_center{};
  double side_mm{250.0};
  std::optional<double> pitch_mm;  // default lambda0/2
};

struct TargetConfig {
  std::array<double, 3> center{500.0, 920.0, 800.0};
  std::array<double, 2> extent_mm{200.0, 150.0};
  double thickness_mm{37.0};
  double eps_real{3.0};
  double eps_imag{0.0};
};

struct SceneConfig {
  double frequency_ghz{24.16};
  std::vector<FaraConfig> faras;
  double z_bg_mm{800.0};
  std::array<double, 2> plate_extent_mm{600.0, 600.0};
  std::optional<std::array<double, 2>> plate_center_mm;
  std::optional<TargetConfig> target;
  std::optional<double> max_edge_mm;  // default lambda0/5
  std::optional<double> window_mm;    // half-width of the illuminated target window
  std::optional<std::array<double, 3>> roi_min, roi_max;
};

enum class Scale { Full, Reduced };

struct MeshSettings {
  double max_edge{0};
  double window_half_width{0};
};

struct Scene {
  PhysicalConstants constants;
  std::vector<Fara> faras;
  Plate plate;
  std::optional<DielectricSlab> target;
  MeshSettings mesh;
  RoiBox roi;
  SceneConfig config;

  std::size_t feed_count() const { return faras.size(); }
};

// Two FARAs, slab on a steel plate. Reduced scale shrinks the arrays to 250 mm.
SceneConfig default_config(Scale scale = Scale::Reduced);
SceneConfig with_target(SceneConfig config, ComplexPermittivity eps, double thickness_mm,
                        double gap_mm = 0.0);
SceneConfig without_target(SceneConfig config);
SceneConfig with_array_side(SceneConfig config, double side_mm);

SceneConfig parse_scene_config(const std::string& json_text);
SceneConfig load_scene_config(const std::string& path);
std::string serialize(const SceneConfig& config);
// FNV-1a 64 of the canonical serialization, as 16 hex digits.
std::string scene_hash(const SceneConfig& config);

Scene build_scene(const SceneConfig& config);

// Front (air-facing) face of the slab, meshed at the scene's facet size.
SurfaceMesh mesh_slab_front(const Scene& scene);

}  // namespace reflectsim
