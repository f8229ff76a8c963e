#ifndef DHRB_LOCMETRICS_HPP
#define DHRB_LOCMETRICS_HPP

#include "dhrb/image.hpp"
#include "dhrb/optics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

namespace dhrb {

struct Localization {
  double x_nm = 0.0;
  double y_nm = 0.0;
  double intensity = 1.0;
};

using LocalizationSet = std::vector<Localization>;

struct DetectOptions {
  double threshold = 0.5;
  int min_pixels = 1;
  int fit_window = 7;
  bool gaussian_refine = true;
};

/// Threshold, 8-connected components, intensity-weighted centroid, then an
/// integrated-Gaussian least-squares refinement over a fit_window^2 box.
LocalizationSet detect_beads(const PlaneImage& img, const DetectOptions& options);

inline LocalizationSet detect_beads(const PlaneImage& img, double detect_threshold, int min_pixels) {
  return detect_beads(img, DetectOptions{detect_threshold, min_pixels});
}

/// Truth set: emitters within `slab_um` of `z_center_um`, positions in nm.
LocalizationSet truth_localizations(const BeadField& field, double z_center_um, double slab_um);

struct MatchedPair {
  std::size_t detected = 0;
  std::size_t truth = 0;
  double distance_nm = 0.0;
};

struct MatchResult {
  std::vector<MatchedPair> pairs;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  /// Sum of matched distances, accumulated in ascending order.
  double total_distance() const;
};

/// Optimal one-to-one matching: the largest number of pairs within
/// `radius_nm`, and among those the smallest total distance.
MatchResult match_localizations(const LocalizationSet& detected, const LocalizationSet& truth, double radius_nm);

double jaccard_index(const MatchResult& m);

/// Undefined (nullopt) when nothing matched.
std::optional<double> lateral_rmse(const MatchResult& m);

template <typename DerivedA, typename DerivedB>
double pearson(const Eigen::ArrayBase<DerivedA>& a, const Eigen::ArrayBase<DerivedB>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument("pearson: shape mismatch");
  const auto ca = (a - a.mean()).eval();
  const auto cb = (b - b.mean()).eval();
  const double va = ca.square().sum();
  const double vb = cb.square().sum();
  if (!(va > 0) || !(vb > 0)) throw InvalidArgument("pearson: constant image");
  return std::clamp((ca * cb).sum() / std::sqrt(va * vb), -1.0, 1.0);
}

inline double correlation_coefficient(const PlaneImage& a, const PlaneImage& b) {
  require_same_shape(a, b, "correlation_coefficient");
  return pearson(a.pixels, b.pixels);
}

struct PlaneMetrics {
  double z_um = 0.0;
  double ji = 0.0;
  std::optional<double> rmse_nm;
  std::optional<double> pearson;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct DofReport {
  double tolerance = 0.0;
  double ji_threshold = 0.0;
  double dof_um = 0.0;
  std::optional<double> avg_rmse_nm;
  double z_low_um = 0.0;
  double z_high_um = 0.0;
};

/// Maps a defocused input (acquired at plane z_input_um) to the target plane.
using Refocuser = std::function<PlaneImage(const PlaneImage& input, double z_input_um)>;

struct SweepConfig {
  OpticalConfig optics;
  PsfModel input_psf;
  std::optional<NoiseParams> noise = NoiseParams{};
  Eigen::Index height = 256;
  Eigen::Index width = 256;
  double target_z_um = 0.0;
  /// Detection threshold as a fraction of the brightest pixel of the
  /// reference (target-plane) output after background removal.
  double detect_threshold = 0.55;
  int min_pixels = 1;
  double match_radius_nm = 250.0;
  double saturation_level = 60000.0;
  int threads = 0;
};

struct SweepResult {
  std::vector<PlaneMetrics> curve;
  double native_ji = 0.0;
  std::vector<DofReport> reports;
};

/// z_min, z_min + step, ..., z_max with values snapped to a 1e-9 um lattice so 0 is exact.
std::vector<double> make_z_grid(double z_min_um, double z_max_um, double step_um);

/// Mean JI over planes with |z - target| <= native_dof_um.
double native_ji(const std::vector<PlaneMetrics>& curve, double native_dof_um, double target_z_um = 0.0);

/// Table rows: threshold (1 - t) * native_ji, length of the contiguous
/// qualifying z-run that contains the target plane, mean RMSE over that run.
std::vector<DofReport> dof_reports(const std::vector<PlaneMetrics>& curve, const std::vector<double>& tolerances,
                                   double native_ji_value, double target_z_um = 0.0);

SweepResult dof_sweep(const Refocuser& refocuser, const BeadField& scene, const std::vector<double>& z_grid,
                      const std::vector<double>& tolerances, const SweepConfig& config);

Refocuser identity_refocuser();

/// Ignores its input and returns the noise-free confocal render of `scene` at the target plane.
Refocuser oracle_refocuser(const BeadField& scene, const SweepConfig& config);

}  // namespace dhrb

#endif  // DHRB_LOCMETRICS_HPP
