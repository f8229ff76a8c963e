#include "dhrb/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dhrb {

std::size_t Histogram::bin_of(double value) const {
  const double lo = bin_edges.front();
  const double span = bin_edges.back() - lo;
  if (!(value > lo)) return 0;
  const double pos = (value - lo) / span * static_cast<double>(counts.size());
  return std::min(static_cast<std::size_t>(pos), counts.size() - 1);
}

Histogram make_histogram(const PlaneImage& img, std::size_t bins) {
  if (bins == 0) throw InvalidArgument("histogram needs at least one bin");
  const double lo = img.pixels.minCoeff();
  double hi = img.pixels.maxCoeff();
  Histogram h;
  if (hi <= lo) {
    h.bin_edges = {lo, lo + 1.0};
    h.counts = {static_cast<std::int64_t>(img.size())};
    return h;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  h.bin_edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.bin_edges[i] = lo + width * static_cast<double>(i);
  h.bin_edges.back() = hi;
  h.counts.assign(bins, 0);
  for (Eigen::Index i = 0; i < img.size(); ++i) ++h.counts[h.bin_of(img.pixels(i))];
  return h;
}

std::size_t triangular_threshold(std::span<const std::int64_t> counts) {
  const auto peak_it = std::max_element(counts.begin(), counts.end());
  if (peak_it == counts.end() || *peak_it <= 0) throw InvalidArgument("triangular threshold of an empty histogram");
  const auto p = static_cast<std::ptrdiff_t>(std::distance(counts.begin(), peak_it));
  const auto n = static_cast<std::ptrdiff_t>(counts.size());

  std::ptrdiff_t e = n - 1;
  while (counts[static_cast<std::size_t>(e)] == 0) --e;
  if (e == p) {
    e = 0;
    while (counts[static_cast<std::size_t>(e)] == 0) ++e;
  }
  if (e == p) return static_cast<std::size_t>(p);

  // Depth below the chord is proportional to -sign(dx) * cross((dx, dy), (i - p, h_i - h_p));
  // the common 1/|chord| factor does not change the argmax.
  const double dx = static_cast<double>(e - p);
  const double dy = static_cast<double>(counts[static_cast<std::size_t>(e)] - *peak_it);
  const double side = dx > 0 ? 1.0 : -1.0;
  const std::ptrdiff_t step = e > p ? 1 : -1;

  std::ptrdiff_t best = p + step;
  double best_depth = -std::numeric_limits<double>::infinity();
  for (std::ptrdiff_t i = p + step; i != e + step; i += step) {
    const double rel_h = static_cast<double>(counts[static_cast<std::size_t>(i)] - *peak_it);
    const double depth = -side * (dx * rel_h - dy * static_cast<double>(i - p));
    if (depth > best_depth) {
      best_depth = depth;
      best = i;
    }
  }
  return static_cast<std::size_t>(best);
}

double percentile(const ImageArrayd& values, double q) {
  if (values.size() == 0) throw InvalidArgument("percentile of an empty array");
  std::vector<double> v(values.data(), values.data() + values.size());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double a = v[lo];
  if (frac == 0.0 || lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
  return a + frac * (b - a);
}

PlaneImage subtract_background(const PlaneImage& img, double saturation_level, NormalizationInfo* info) {
  if (!(saturation_level > 0)) throw InvalidArgument("saturation level must be positive");
  NormalizationInfo local;
  PlaneImage out = img;

  const Histogram hist = make_histogram(img);
  if (hist.bins() == 1) {
    out.pixels.setZero();
    if (info) *info = local;
    return out;
  }
  const std::size_t t = triangular_threshold(hist);
  const auto peak = static_cast<std::size_t>(
      std::distance(hist.counts.begin(), std::max_element(hist.counts.begin(), hist.counts.end())));
  const bool background_below = peak < t;

  double sum = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    const std::size_t b = hist.bin_of(img.pixels(i));
    if (background_below ? b < t : b > t) {
      sum += img.pixels(i);
      ++count;
    }
  }
  local.threshold_bin = t;
  local.background = count > 0 ? sum / static_cast<double>(count) : 0.0;
  out.pixels = (img.pixels - local.background).max(0.0);

  // Saturated pixels take the median of their unsaturated 8-neighbors.
  const auto saturated = (img.pixels >= saturation_level).eval();
  if (saturated.any()) {
    const ImageArrayd cleaned = out.pixels;
    std::vector<double> neighbors;
    neighbors.reserve(8);
    for (Eigen::Index r = 0; r < img.height(); ++r) {
      for (Eigen::Index c = 0; c < img.width(); ++c) {
        if (!saturated(r, c)) continue;
        neighbors.clear();
        for (Eigen::Index dr = -1; dr <= 1; ++dr) {
          for (Eigen::Index dc = -1; dc <= 1; ++dc) {
            const Eigen::Index rr = r + dr;
            const Eigen::Index cc = c + dc;
            if ((dr == 0 && dc == 0) || rr < 0 || cc < 0 || rr >= img.height() || cc >= img.width()) continue;
            if (!saturated(rr, cc)) neighbors.push_back(cleaned(rr, cc));
          }
        }
        double repl = 0.0;
        if (!neighbors.empty()) {
          std::sort(neighbors.begin(), neighbors.end());
          const std::size_t m = neighbors.size();
          repl = m % 2 ? neighbors[m / 2] : 0.5 * (neighbors[m / 2 - 1] + neighbors[m / 2]);
        }
        out.pixels(r, c) = repl;
        ++local.repaired_pixels;
      }
    }
  }
  if (info) *info = local;
  return out;
}

PlaneImage normalize_image(const PlaneImage& img, double saturation_level, NormalizationInfo* info) {
  NormalizationInfo local;
  PlaneImage out = subtract_background(img, saturation_level, &local);
  local.scale = percentile(out.pixels, 99.9);
  if (local.scale > 0.0) {
    out.pixels /= local.scale;
  } else {
    local.scale = 0.0;
    out.pixels.setZero();
  }
  if (info) *info = local;
  return out;
}

Eigen::Index PatchGrid::stride() const {
  return std::max<Eigen::Index>(1, std::llround(static_cast<double>(patch_px) * (1.0 - overlap_fraction)));
}

std::vector<Eigen::Index> axis_origins(Eigen::Index extent, Eigen::Index patch_px, Eigen::Index stride) {
  if (extent < patch_px) {
    throw InvalidArgument("image extent " + std::to_string(extent) + " is smaller than the patch size " +
                          std::to_string(patch_px));
  }
  std::vector<Eigen::Index> origins;
  for (Eigen::Index o = 0;; o += stride) {
    if (o + patch_px >= extent) {
      origins.push_back(extent - patch_px);
      break;
    }
    origins.push_back(o);
  }
  return origins;
}

PatchGrid plan_patches(Eigen::Index height, Eigen::Index width, Eigen::Index patch_px, double overlap_fraction) {
  if (patch_px <= 0) throw InvalidArgument("patch size must be positive");
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    throw InvalidArgument("overlap fraction must lie in [0, 1)");
  }
  PatchGrid grid{patch_px, overlap_fraction, {}};
  const auto rows = axis_origins(height, patch_px, grid.stride());
  const auto cols = axis_origins(width, patch_px, grid.stride());
  for (Eigen::Index r : rows) {
    for (Eigen::Index c : cols) grid.origins.push_back({r, c});
  }
  return grid;
}

std::vector<PlaneImage> crop_patches(const PlaneImage& img, const PatchGrid& grid) {
  if (img.height() < grid.patch_px || img.width() < grid.patch_px) {
    throw InvalidArgument("image smaller than the patch size");
  }
  std::vector<PlaneImage> patches;
  patches.reserve(grid.origins.size());
  for (const PatchOrigin& o : grid.origins) {
    if (o.row < 0 || o.col < 0 || o.row + grid.patch_px > img.height() || o.col + grid.patch_px > img.width()) {
      throw InvalidArgument("patch origin out of bounds");
    }
    patches.emplace_back(ImageArrayd(img.pixels.block(o.row, o.col, grid.patch_px, grid.patch_px)),
                         img.pixel_size_nm, img.z_plane_um);
  }
  return patches;
}

}  // namespace dhrb
