#ifndef DHRB_REGISTRATION_HPP
#define DHRB_REGISTRATION_HPP

#include "dhrb/image.hpp"

#include <array>

namespace dhrb {

enum class CorrelationKind {
  normalized,  // zero-mean, unit-norm circular cross-correlation
  phase,       // whitened cross-power spectrum (baseline)
};

/// Circular correlation surface. Index (0, 0) is zero shift; indices wrap.
/// The value at (r, c) scores target against input translated by (r, c).
struct CorrelationMap {
  ImageArrayd values;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  double at(Eigen::Index r, Eigen::Index c) const {
    return values(wrap_index(r, rows()), wrap_index(c, cols()));
  }
  /// Bilinear interpolation at a real-valued circular position.
  double interpolate(double r, double c) const;
};

CorrelationMap normalized_xcorr(const PlaneImage& a, const PlaneImage& b,
                                CorrelationKind kind = CorrelationKind::normalized);

struct IntegerPeak {
  Eigen::Index row = 0;
  Eigen::Index col = 0;
};

struct PeakPair {
  IntegerPeak first;   // global maximum
  IntegerPeak second;  // strongest separated local maximum, or `first` when degraded
  bool degraded = false;
};

PeakPair top_two_local_maxima(const CorrelationMap& corr, int min_separation_px);

struct PeakEstimate {
  double row = 0.0;  // signed shift in (-rows/2, rows/2]
  double col = 0.0;
  double score = 0.0;
  bool degraded = false;
};

/// Least-squares fit of a full 2D quadratic over a `window` x `window`
/// neighborhood (gathered circularly) and its stationary point.
PeakEstimate subpixel_refine(const CorrelationMap& corr, IntegerPeak peak, int window = 5);

struct DppcmOptions {
  int min_separation_px = 3;
  /// The second peak is paired with the first only when its correlation
  /// reaches this fraction of the global maximum.
  double pair_ratio = 0.6;
  CorrelationKind kind = CorrelationKind::normalized;
  bool single_peak = false;
  int fit_window = 5;
};

struct ShiftEstimate {
  double dx_px = 0.0;  // translation carrying input onto target, columns
  double dy_px = 0.0;  // rows
  double confidence = 0.0;
  std::array<PeakEstimate, 2> peaks{};
  bool dual_peak = false;
  bool degraded = false;
};

/// Dual-peak phase correlation: the shift is the midpoint of the two strongest
/// correlation maxima, each refined to subpixel precision. Falls back to the
/// single global peak when no comparable partner peak exists.
ShiftEstimate dppcm_shift(const PlaneImage& input, const PlaneImage& target, const DppcmOptions& options = {});

enum class ShiftMethod { fourier, bilinear };

/// Translates `img` so content at x moves to x + (dx, dy).
PlaneImage apply_shift(const PlaneImage& img, double dx_px, double dy_px, ShiftMethod method = ShiftMethod::fourier);

}  // namespace dhrb

#endif  // DHRB_REGISTRATION_HPP
