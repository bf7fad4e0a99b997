#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "reflectsim/em_kernels.hpp"
#include "reflectsim/reflectarray.hpp"
#include "reflectsim/scene.hpp"

namespace reflectsim {

// Target-side surfaces inside the illuminated window around one transverse
// position. obj/bot are the slab's front and back faces (null without a
// slab); body is the part of the plate not covered by the slab.
struct TargetSurfaces {
  double x{0}, y{0};
  std::shared_ptr<const SurfaceMesh> obj, bot, body;
  ComplexPermittivity eps{kAir};
  // Propagation through the slab between the two faces.
  std::shared_ptr<const LatticePropagator> down, up;

  bool has_slab() const { return obj != nullptr; }
};

TargetSurfaces build_target_surfaces(const Scene& scene, double x, double y);

// Fields produced on the target surfaces by one feed focused at one point.
struct Illumination {
  std::size_t feed{0};
  Vec3 focus;
  std::vector<CVec3> E_obj, H_obj, E_body, H_body;
};

struct TargetCurrents {
  CurrentSheet obj;   // total front-face currents
  CurrentSheet body;  // exposed plate, electric only
  CurrentSheet bot;   // accumulated back-face currents
  std::vector<double> order_norms;  // RMS of |J| on the front face per order

  TargetCurrents& operator+=(const TargetCurrents& o);
};

struct ReceivedFieldSet {
  std::vector<Vec3> focus;
  std::vector<std::vector<cplx>> per_receiver;  // [n][p]
  std::vector<cplx> total;                      // [n], sum over p in index order
};

struct PsfSpec {
  double half_extent{0};  // default 3 lambda0
  double step{0};         // default lambda0/10
  bool volume{false};     // full 3-D grid as well as the three axis cuts
};

struct PsfResult {
  Vec3 focus;
  std::vector<double> offsets;       // axis sample offsets
  std::vector<CVec3> cut[3];         // total one-way field along x, y, z through the focus
  std::vector<Vec3> volume_points;   // optional
  std::vector<CVec3> volume_field;
  double width_one_way[3]{};         // 3-dB widths of |E|
  double width_two_way[3]{};         // 3-dB widths of |E.E| (transmit-receive response)
  Vec3 peak_one_way, peak_two_way;   // argmax over the cuts (or the volume)
};

struct ProfileImage {
  std::vector<double> xs, ys, zs;
  std::vector<double> z_imaging;  // [iy * xs.size() + ix]
  std::vector<double> peak;
  std::vector<std::vector<cplx>> traces;  // received total per pixel over zs

  double z_at(std::size_t ix, std::size_t iy) const { return z_imaging[iy * xs.size() + ix]; }
};

struct ImagerOptions {
  int k_order{3};
  std::size_t workers{0};
};

class PoImager {
 public:
  explicit PoImager(Scene scene, ImagerOptions options = {});

  const Scene& scene() const { return scene_; }
  const ImagerOptions& options() const { return options_; }

  // Unmasked PEC patch currents induced by feed p, one per patch.
  const std::vector<CVec3>& patch_currents(std::size_t p) const { return patch_currents_.at(p); }
  PhaseMask mask(std::size_t p, const Vec3& focus) const;
  // Array facet sheet (two facets per patch) with the mask for `focus` applied.
  CurrentSheet array_sheet(std::size_t p, const Vec3& focus) const;

  const TargetSurfaces& surfaces(double x, double y);

  Illumination illuminate(std::size_t p, const Vec3& focus, const TargetSurfaces& s) const;
  TargetCurrents cascade(const Illumination& field, const TargetSurfaces& s, int k_order) const;
  // Reciprocity receive for receiver p from the feed-summed target currents.
  cplx receive(const Illumination& rx, const TargetCurrents& currents) const;
  // Brute-force receive: radiate the target currents back to array p, re-induce
  // the masked patch currents and integrate the field over the horn aperture.
  cplx back_propagate(std::size_t p, const Vec3& focus, const TargetCurrents& currents,
                      const TargetSurfaces& s) const;

  struct FocusRun {
    std::vector<Illumination> fields;  // per feed
    TargetCurrents currents;           // summed over feeds
    std::vector<cplx> received;        // per receiver
    cplx total{};
  };
  FocusRun run_focus(const Vec3& focus, std::optional<int> k_order = std::nullopt);

  ReceivedFieldSet simulate_received(std::span<const Vec3> focus_points,
                                     std::optional<int> k_order = std::nullopt);

  PsfResult psf(const Vec3& focus, PsfSpec spec = {}) const;

  ProfileImage reconstruct_profile(std::vector<double> xs, std::vector<double> ys, double z_min,
                                   double z_max, double dz, std::optional<int> k_order = std::nullopt);

 private:
  Scene scene_;
  ImagerOptions options_;
  std::vector<std::vector<CVec3>> patch_currents_;
  std::map<std::pair<double, double>, TargetSurfaces> surfaces_;
};

// 3-dB width of a sampled amplitude profile around its maximum, with linear
// interpolation at the crossings. Infinity when the profile never drops.
double three_db_width(std::span<const double> offsets, std::span<const double> amplitude);

void write_psf_csv(std::ostream& out, const PsfResult& psf);
void write_profile_csv(std::ostream& out, const ProfileImage& image);
std::string profile_metadata_json(const ProfileImage& image, const std::string& scene_hash, int k_order,
                                  double dz);
void write_currents_csv(std::ostream& out, const CurrentSheet& sheet);

}  // namespace reflectsim
