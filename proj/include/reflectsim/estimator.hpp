#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "reflectsim/go_forward.hpp"
#include "reflectsim/po_imager.hpp"
#include "reflectsim/reflectarray.hpp"

namespace reflectsim {

struct Range {
  double min{0}, max{0}, step{1};
  std::vector<double> values() const;
};

struct SweepGrid {
  Range eps_real{2.0, 10.0, 0.25};
  Range eps_imag{0.0, 0.5, 0.05};
  Range thickness{0.0, 60.0, 1.0};

  void validate() const;
  // Node index with thickness outermost, then eps', then eps''.
  std::size_t index(std::size_t it, std::size_t ir, std::size_t ii) const;
};

struct Measurement {
  Vec3 focus;
  cplx value;
};

struct MeasurementSet {
  std::vector<Measurement> entries;
  Vec3 cal_focus;
  cplx cal{};

  void validate() const;
  std::vector<Vec3> focus_points() const;
};

MeasurementSet read_measurements(std::istream& in);
MeasurementSet read_measurements(const std::string& path);
void write_measurements(std::ostream& out, const MeasurementSet& meas);

// N points along z, centred on the imaged profile centre (middle pixel).
FocusGrid select_focus_points(const ProfileImage& profile, int n, double dz);
FocusGrid select_focus_points(const Vec3& center, int n, double dz);

double error_function(std::span<const cplx> pred, cplx pred_cal, const MeasurementSet& meas);

// GO predictions on every grid node for a fixed set of focus points.
struct PredictionTable {
  SweepGrid grid;
  std::vector<double> eps_real, eps_imag, thickness;
  std::vector<Vec3> focus;
  Vec3 cal_focus;
  cplx calibration{};
  std::vector<cplx> values;  // [node * focus.size() + n]

  std::size_t nodes() const { return eps_real.size() * eps_imag.size() * thickness.size(); }
};

struct EstimatorOptions {
  GoOptions go{};
  std::size_t workers{0};
};

PredictionTable build_prediction_table(const Scene& scene, std::span<const Vec3> focus, const Vec3& cal_focus,
                                       const SweepGrid& grid, const EstimatorOptions& options = {});

struct EstimationResult {
  ComplexPermittivity eps;
  double thickness{0};
  double min_error{0};
  std::array<std::size_t, 3> argmin{};  // (T, eps', eps'') indices
  SweepGrid grid;
  std::vector<double> surface;  // f per node, grid order
  double runtime_ms{0};
};

EstimationResult estimate(const PredictionTable& table, const MeasurementSet& meas);
EstimationResult estimate(const Scene& scene, const MeasurementSet& meas, const SweepGrid& grid,
                          const EstimatorOptions& options = {});

struct BatchStatistics {
  std::vector<EstimationResult> runs;
  std::array<double, 3> mean{};  // eps', eps'', T
  std::array<double, 3> std{};   // sample standard deviation
};

BatchStatistics estimate_batch(const Scene& scene, std::span<const MeasurementSet> runs, const SweepGrid& grid,
                               const EstimatorOptions& options = {});

// Noise-free GO measurement of a slab; the calibration uses the bare plate.
MeasurementSet synthesize_measurement(const Scene& scene, std::span<const Vec3> focus, const Vec3& cal_focus,
                                      ComplexPermittivity eps, double thickness, const GoOptions& go = {});
// Additive circular complex Gaussian noise on every value including the
// calibration; SNR is relative to each value's own power.
MeasurementSet add_noise(const MeasurementSet& meas, double snr_db, std::uint64_t seed);

void write_error_surface_csv(std::ostream& out, const EstimationResult& result);
std::string result_json(const EstimationResult& result);

}  // namespace reflectsim
