#include "reflectsim/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "reflectsim/errors.hpp"

namespace reflectsim {

using ordered_json = nlohmann::ordered_json;

void validate(const ComplexPermittivity& eps) {
  if (!(eps.eps_real >= 1.0)) throw ValidationError("permittivity: eps_real must be >= 1");
  if (!(eps.eps_imag >= 0.0)) throw ValidationError("permittivity: eps_imag must be >= 0");
}

std::string RoiBox::violation(const Vec3& p) const {
  auto fmt = [](const char* axis, const char* op, double bound) {
    std::ostringstream s;
    s << axis << ' ' << op << ' ' << bound;
    return s.str();
  };
  if (p.x < min.x) return fmt("x", "<", min.x);
  if (p.x > max.x) return fmt("x", ">", max.x);
  if (p.y < min.y) return fmt("y", "<", min.y);
  if (p.y > max.y) return fmt("y", ">", max.y);
  if (p.z < min.z) return fmt("z", "<", min.z);
  if (p.z > max.z) return fmt("z", ">", max.z);
  return {};
}

std::optional<std::size_t> Reflectarray::nearest_patch(const Vec3& p) const {
  const Vec3 d = p - center;
  const double a = dot(d, u), b = dot(d, v);
  const double half = 0.5 * per_side * pitch;
  if (std::abs(a) > half || std::abs(b) > half) return std::nullopt;
  auto index = [&](double coord) {
    // ceil(x - 0.5) rounds exact halves down, so ties pick the lower index.
    const double x = coord / pitch + 0.5 * (per_side - 1);
    int i = static_cast<int>(std::ceil(x - 0.5));
    return std::clamp(i, 0, per_side - 1);
  };
  return static_cast<std::size_t>(index(b)) * per_side + index(a);
}

SceneConfig default_config(Scale scale) {
  SceneConfig c;
  const double side = scale == Scale::Full ? 1000.0 : 250.0;
  c.faras.push_back({{1313.0, 1413.0, 830.0}, {17.0, 12.5}, {500.0, 1413.0, 0.0}, side, {}});
  c.faras.push_back({{1313.0, 461.0, 830.0}, {17.0, 12.5}, {500.0, 461.0, 0.0}, side, {}});
  c.target = TargetConfig{};
  return c;
}

SceneConfig with_target(SceneConfig config, ComplexPermittivity eps, double thickness_mm,
                        double gap_mm) {
  TargetConfig t = config.target.value_or(TargetConfig{});
  t.eps_real = eps.eps_real;
  t.eps_imag = eps.eps_imag;
  t.thickness_mm = thickness_mm;
  t.center[2] = config.z_bg_mm - gap_mm;
  config.target = t;
  return config;
}

SceneConfig without_target(SceneConfig config) {
  config.target.reset();
  return config;
}

SceneConfig with_array_side(SceneConfig config, double side_mm) {
  for (auto& f : config.faras) f.side_mm = side_mm;
  return config;
}

namespace {

template <std::size_t N>
std::array<double, N> read_array(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("scene config: missing key '") + key + "'");
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != N) {
    throw ValidationError(std::string("scene config: '") + key + "' must be an array of " +
                          std::to_string(N) + " numbers");
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!a[i].is_number()) throw ValidationError(std::string("scene config: '") + key + "' must be numeric");
    out[i] = a[i].get<double>();
  }
  return out;
}

double read_number(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw ValidationError(std::string("scene config: missing or non-numeric '") + key + "'");
  }
  return j.at(key).get<double>();
}

std::optional<double> read_optional(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return read_number(j, key);
}

}  // namespace

SceneConfig parse_scene_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(std::string("scene config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("scene config: top level must be an object");

  SceneConfig c;
  c.frequency_ghz = read_number(j, "frequency_ghz");
  if (!j.contains("faras") || !j["faras"].is_array()) {
    throw ValidationError("scene config: 'faras' must be an array");
  }
  for (const auto& f : j["faras"]) {
    FaraConfig fc;
    fc.feed_center = read_array<3>(f, "feed_center");
    fc.aperture_mm = read_array<2>(f, "aperture_mm");
    fc.array_center = read_array<3>(f, "array_center");
    fc.side_mm = read_number(f, "side_mm");
    fc.pitch_mm = read_optional(f, "pitch_mm");
    c.faras.push_back(fc);
  }
  if (!j.contains("plate")) throw ValidationError("scene config: missing 'plate'");
  const auto& plate = j["plate"];
  c.z_bg_mm = read_number(plate, "z_bg_mm");
  c.plate_extent_mm = read_array<2>(plate, "extent_mm");
  if (plate.contains("center_mm")) c.plate_center_mm = read_array<2>(plate, "center_mm");
  if (j.contains("target") && !j["target"].is_null()) {
    const auto& t = j["target"];
    TargetConfig tc;
    tc.center = read_array<3>(t, "center");
    tc.extent_mm = read_array<2>(t, "extent_mm");
    tc.thickness_mm = read_number(t, "thickness_mm");
    tc.eps_real = read_number(t, "eps_real");
    tc.eps_imag = read_number(t, "eps_imag");
    c.target = tc;
  }
  if (j.contains("mesh")) {
    c.max_edge_mm = read_optional(j["mesh"], "max_edge_mm");
    c.window_mm = read_optional(j["mesh"], "window_mm");
  }
  if (j.contains("roi")) {
    c.roi_min = read_array<3>(j["roi"], "min");
    c.roi_max = read_array<3>(j["roi"], "max");
  }
  return c;
}

SceneConfig load_scene_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scene config '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_scene_config(buffer.str());
}

std::string serialize(const SceneConfig& c) {
  ordered_json j;
  j["frequency_ghz"] = c.frequency_ghz;
  j["faras"] = ordered_json::array();
  for (const auto& f : c.faras) {
    ordered_json fj;
    fj["feed_center"] = f.feed_center;
    fj["aperture_mm"] = f.aperture_mm;
    fj["array_center"] = f.array_center;
    fj["side_mm"] = f.side_mm;
    if (f.pitch_mm) fj["pitch_mm"] = *f.pitch_mm;
    j["faras"].push_back(fj);
  }
  ordered_json plate;
  plate["z_bg_mm"] = c.z_bg_mm;
  plate["extent_mm"] = c.plate_extent_mm;
  if (c.plate_center_mm) plate["center_mm"] = *c.plate_center_mm;
  j["plate"] = plate;
  if (c.target) {
    ordered_json t;
    t["center"] = c.target->center;
    t["extent_mm"] = c.target->extent_mm;
    t["thickness_mm"] = c.target->thickness_mm;
    t["eps_real"] = c.target->eps_real;
    t["eps_imag"] = c.target->eps_imag;
    j["target"] = t;
  }
  if (c.max_edge_mm || c.window_mm) {
    ordered_json m = ordered_json::object();
    if (c.max_edge_mm) m["max_edge_mm"] = *c.max_edge_mm;
    if (c.window_mm) m["window_mm"] = *c.window_mm;
    j["mesh"] = m;
  }
  if (c.roi_min && c.roi_max) {
    j["roi"] = {{"min", *c.roi_min}, {"max", *c.roi_max}};
  }
  return j.dump(2) + "\n";
}

std::string scene_hash(const SceneConfig& config) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : serialize(config)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

namespace {

Vec3 to_vec(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }

void require_positive(double value, const std::string& what) {
  if (!(value > 0.0) || !std::isfinite(value)) throw ValidationError(what + " must be positive");
}

HornFeed build_feed(const FaraConfig& fc, double max_edge) {
  HornFeed feed;
  feed.aperture_center = to_vec(fc.feed_center);
  const Vec3 to_array = to_vec(fc.array_center) - feed.aperture_center;
  if (to_array.norm() == 0.0) throw ValidationError("feed coincides with its array centre");
  feed.boresight = to_array.normalized();
  // Co-polarised along the array y axis, projected into the aperture plane.
  Vec3 pol = Vec3{0, 1, 0} - feed.boresight * feed.boresight.y;
  if (pol.norm() < 1e-9) pol = Vec3{1, 0, 0} - feed.boresight * feed.boresight.x;
  feed.polarization = pol.normalized();
  feed.aperture_width = fc.aperture_mm[0];
  feed.aperture_height = fc.aperture_mm[1];
  const Vec3 u = cross(feed.polarization, feed.boresight).normalized();
  feed.aperture = mesh_panel(feed.aperture_center, u, feed.polarization, feed.aperture_width,
                             feed.aperture_height, max_edge);
  feed.current.assign(feed.aperture.size(), CVec3(feed.polarization));
  return feed;
}

Reflectarray build_array(const FaraConfig& fc, const Vec3& feed_pos, double pitch) {
  Reflectarray a;
  a.center = to_vec(fc.array_center);
  a.side = fc.side_mm;
  a.pitch = pitch;
  if (feed_pos.z >= a.center.z) {
    a.u = {1, 0, 0};
    a.v = {0, 1, 0};
  } else {
    a.u = {0, 1, 0};
    a.v = {1, 0, 0};
  }
  a.normal = cross(a.u, a.v);
  a.per_side = static_cast<int>(std::floor(a.side / pitch + 1e-9));
  if (a.per_side < 1) throw ValidationError("reflectarray side is smaller than one patch pitch");
  const double offset = 0.5 * (a.per_side - 1);
  const Vec3 hu = a.u * (0.5 * pitch), hv = a.v * (0.5 * pitch);
  a.patch_centers.reserve(static_cast<std::size_t>(a.per_side) * a.per_side);
  a.facets.facets.reserve(2 * a.patch_centers.capacity());
  a.facets.target_edge_length = pitch * std::sqrt(2.0);
  for (int j = 0; j < a.per_side; ++j) {
    for (int i = 0; i < a.per_side; ++i) {
      const Vec3 c = a.center + a.u * ((i - offset) * pitch) + a.v * ((j - offset) * pitch);
      a.patch_centers.push_back(c);
      const Vec3 p00 = c - hu - hv, p10 = c + hu - hv, p01 = c - hu + hv, p11 = c + hu + hv;
      a.facets.facets.push_back(make_facet(p00, p10, p11));
      a.facets.facets.push_back(make_facet(p00, p11, p01));
    }
  }
  for (auto& f : a.facets.facets) f.normal = a.normal;
  return a;
}

}  // namespace

Scene build_scene(const SceneConfig& config) {
  Scene s;
  s.config = config;
  require_positive(config.frequency_ghz, "frequency_ghz");
  s.constants = PhysicalConstants::at(config.frequency_ghz);
  const double lambda = s.constants.wavelength;

  s.mesh.max_edge = config.max_edge_mm.value_or(lambda / 5.0);
  if (!(s.mesh.max_edge > 0.0)) throw ValidationError("mesh.max_edge_mm: non-positive mesh density");
  s.mesh.window_half_width = config.window_mm.value_or(64.0);
  require_positive(s.mesh.window_half_width, "mesh.window_mm");

  require_positive(config.z_bg_mm, "plate.z_bg_mm");
  require_positive(config.plate_extent_mm[0], "plate.extent_mm[0]");
  require_positive(config.plate_extent_mm[1], "plate.extent_mm[1]");
  s.plate.z_bg = config.z_bg_mm;
  s.plate.extent_x = config.plate_extent_mm[0];
  s.plate.extent_y = config.plate_extent_mm[1];
  if (config.plate_center_mm) {
    s.plate.center_x = (*config.plate_center_mm)[0];
    s.plate.center_y = (*config.plate_center_mm)[1];
  } else if (config.target) {
    s.plate.center_x = config.target->center[0];
    s.plate.center_y = config.target->center[1];
  }

  if (config.roi_min && config.roi_max) {
    s.roi.min = to_vec(*config.roi_min);
    s.roi.max = to_vec(*config.roi_max);
  } else {
    s.roi.min = {s.plate.center_x - 0.5 * s.plate.extent_x, s.plate.center_y - 0.5 * s.plate.extent_y,
                 s.plate.z_bg - 200.0};
    s.roi.max = {s.plate.center_x + 0.5 * s.plate.extent_x, s.plate.center_y + 0.5 * s.plate.extent_y,
                 s.plate.z_bg + 200.0};
  }

  if (config.faras.empty()) throw ValidationError("scene needs at least one FARA");
  for (std::size_t p = 0; p < config.faras.size(); ++p) {
    const auto& fc = config.faras[p];
    const std::string tag = "faras[" + std::to_string(p) + "]";
    require_positive(fc.side_mm, tag + ".side_mm");
    require_positive(fc.aperture_mm[0], tag + ".aperture_mm[0]");
    require_positive(fc.aperture_mm[1], tag + ".aperture_mm[1]");
    const double pitch = fc.pitch_mm.value_or(lambda / 2.0);
    require_positive(pitch, tag + ".pitch_mm");
    const Vec3 feed_pos = to_vec(fc.feed_center);
    if (s.roi.contains(feed_pos)) throw ValidationError(tag + ": feed placed inside the RoI");
    Fara fara;
    fara.feed = build_feed(fc, s.mesh.max_edge);
    fara.array = build_array(fc, feed_pos, pitch);
    s.faras.push_back(std::move(fara));
  }

  if (config.target) {
    const auto& t = *config.target;
    require_positive(t.thickness_mm, "target.thickness_mm");
    require_positive(t.extent_mm[0], "target.extent_mm[0]");
    require_positive(t.extent_mm[1], "target.extent_mm[1]");
    ComplexPermittivity eps{t.eps_real, t.eps_imag};
    validate(eps);
    DielectricSlab slab;
    slab.center = to_vec(t.center);
    slab.extent_x = t.extent_mm[0];
    slab.extent_y = t.extent_mm[1];
    slab.thickness = t.thickness_mm;
    slab.eps = eps;
    if (slab.center.z > s.plate.z_bg + 1e-9) throw ValidationError("target overlaps the plate volume");
    slab.gap = s.plate.z_bg - slab.center.z;
    const double tol = 1e-9;
    if (std::abs(slab.center.x - s.plate.center_x) + 0.5 * slab.extent_x > 0.5 * s.plate.extent_x + tol ||
        std::abs(slab.center.y - s.plate.center_y) + 0.5 * slab.extent_y > 0.5 * s.plate.extent_y + tol) {
      throw ValidationError("target footprint extends beyond the plate");
    }
    s.target = slab;
  }
  return s;
}

SurfaceMesh mesh_slab_front(const Scene& scene) {
  if (!scene.target) throw ValidationError("scene has no target");
  const auto& t = *scene.target;
  // Normal -z faces the arrays: u x v = y x x = -z.
  return mesh_panel({t.center.x, t.center.y, t.front_z()}, {0, 1, 0}, {1, 0, 0}, t.extent_y,
                    t.extent_x, scene.mesh.max_edge);
}

}  // namespace reflectsim
