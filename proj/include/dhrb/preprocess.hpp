#ifndef DHRB_PREPROCESS_HPP
#define DHRB_PREPROCESS_HPP

#include "dhrb/image.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace dhrb {

struct Histogram {
  std::vector<double> bin_edges;     // B + 1 strictly increasing edges
  std::vector<std::int64_t> counts;  // B counts

  std::size_t bins() const { return counts.size(); }
  /// Bin holding `value`; values at or beyond the last edge land in the last bin.
  std::size_t bin_of(double value) const;
};

/// Histogram of `img` over [min, max] with `bins` equal-width bins.
/// A constant image gets a single populated bin of unit width.
Histogram make_histogram(const PlaneImage& img, std::size_t bins = 256);

/// Zack's triangle method: the bin past the histogram peak, toward the far
/// tail, that lies deepest below the peak-to-tail chord. Ties go to the bin
/// nearest the peak.
std::size_t triangular_threshold(std::span<const std::int64_t> counts);

inline std::size_t triangular_threshold(const Histogram& hist) { return triangular_threshold(hist.counts); }

/// Parameters that normalize_image applied, for reuse across a stack.
struct NormalizationInfo {
  std::size_t threshold_bin = 0;
  double background = 0.0;
  double scale = 0.0;  // 99.9th percentile after background removal; 0 for a blank result
  std::size_t repaired_pixels = 0;
};

/// Background subtraction and saturated-pixel repair (everything before rescaling).
PlaneImage subtract_background(const PlaneImage& img, double saturation_level, NormalizationInfo* info = nullptr);

/// Full normalization: triangle-threshold background removal, saturated-pixel
/// repair, then rescaling so the 99.9th percentile maps to 1.
PlaneImage normalize_image(const PlaneImage& img, double saturation_level, NormalizationInfo* info = nullptr);

/// Linear-interpolated percentile, q in [0, 100].
double percentile(const ImageArrayd& values, double q);

struct PatchOrigin {
  Eigen::Index row = 0;
  Eigen::Index col = 0;
};

struct PatchGrid {
  Eigen::Index patch_px = 256;
  double overlap_fraction = 0.10;
  std::vector<PatchOrigin> origins;

  Eigen::Index stride() const;
};

/// Origins along one axis: multiples of the stride, last one clamped in-bounds.
std::vector<Eigen::Index> axis_origins(Eigen::Index extent, Eigen::Index patch_px, Eigen::Index stride);

PatchGrid plan_patches(Eigen::Index height, Eigen::Index width, Eigen::Index patch_px = 256,
                       double overlap_fraction = 0.10);

std::vector<PlaneImage> crop_patches(const PlaneImage& img, const PatchGrid& grid);

}  // namespace dhrb

#endif  // DHRB_PREPROCESS_HPP
