#include "dhrb/optics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace dhrb {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

// Fraction of a unit 1D Gaussian (mean `mu`, std `sigma`) falling in [lo, lo + 1).
inline double pixel_mass(double lo, double mu, double sigma) {
  const double s = kInvSqrt2 / sigma;
  return 0.5 * (std::erf((lo + 1.0 - mu) * s) - std::erf((lo - mu) * s));
}

void require_odd_patch(int patch_px) {
  if (patch_px <= 0 || patch_px % 2 == 0) {
    throw InvalidArgument("patch size must be a positive odd number, got " + std::to_string(patch_px));
  }
}

PlaneImage renormalized(ImageArrayd canvas) {
  const double total = canvas.sum();
  if (total > 0.0) canvas /= total;
  return PlaneImage(std::move(canvas));
}

}  // namespace

void validate(const OpticalConfig& c) {
  if (!(c.pixel_size_nm > 0 && c.wavelength_nm > 0 && c.numerical_aperture > 0 && c.magnification > 0 &&
        c.native_dof_um > 0)) {
    throw InvalidArgument("optical config fields must be strictly positive");
  }
  if (c.numerical_aperture > 1.6) throw InvalidArgument("numerical aperture must not exceed 1.6");
  if (c.pixel_size_nm >= c.wavelength_nm) throw InvalidArgument("pixel size must be below the wavelength");
}

FieldBounds frame_bounds(Eigen::Index height, Eigen::Index width, const OpticalConfig& config, double z_min_um,
                         double z_max_um) {
  const double px_um = config.pixel_size_nm / 1000.0;
  return FieldBounds{static_cast<double>(width) * px_um, static_cast<double>(height) * px_um, z_min_um, z_max_um};
}

void BeadField::validate() const {
  for (std::size_t i = 0; i < emitters.size(); ++i) {
    const Emitter& e = emitters[i];
    if (!bounds.contains(e)) throw InvalidArgument("emitter " + std::to_string(i) + " lies outside the field bounds");
    if (!(e.photons > 0)) throw InvalidArgument("emitter " + std::to_string(i) + " has non-positive photons");
  }
}

BeadField BeadField::merged_with(const BeadField& other) const {
  BeadField out = *this;
  out.emitters.insert(out.emitters.end(), other.emitters.begin(), other.emitters.end());
  out.bounds.width_um = std::max(bounds.width_um, other.bounds.width_um);
  out.bounds.height_um = std::max(bounds.height_um, other.bounds.height_um);
  out.bounds.z_min_um = std::min(bounds.z_min_um, other.bounds.z_min_um);
  out.bounds.z_max_um = std::max(bounds.z_max_um, other.bounds.z_max_um);
  return out;
}

double DhPsfParams::lobe_sigma(double defocus_um) const {
  return lobe_sigma0_px + sigma_growth_per_um * std::abs(defocus_um);
}

void validate(const DhPsfParams& p) {
  if (!(p.lobe_sigma0_px > 0 && p.lobe_distance_px > 0 && p.omega_rad_per_um > 0 && p.z_range_um > 0 &&
        p.sigma_growth_per_um > 0)) {
    throw InvalidArgument("double-helix parameters must be positive (except theta0)");
  }
  if (p.lobe_distance_px <= 2.0 * p.lobe_sigma0_px) {
    throw InvalidArgument("lobe distance must exceed twice the lobe width");
  }
  if (p.omega_rad_per_um * p.z_range_um > std::numbers::pi / 2 + 1e-12) {
    throw InvalidArgument("total lobe rotation over the valid range must stay within +-90 degrees");
  }
}

double WidefieldPsfParams::sigma(double defocus_um) const {
  const double u = defocus_um / z_rayleigh_um;
  return sigma0_px * std::sqrt(1.0 + u * u);
}

void validate(const WidefieldPsfParams& p) {
  if (!(p.sigma0_px > 0 && p.z_rayleigh_um > 0)) throw InvalidArgument("wide-field parameters must be positive");
}

void validate(const NoiseParams& p) {
  if (!(p.background_photons >= 0) || !(p.read_sigma >= 0) || !(p.full_well > 0)) {
    throw InvalidArgument("noise parameters out of range");
  }
}

void accumulate_gaussian(ImageArrayd& canvas, double x_px, double y_px, double sigma_px, double weight,
                         double radius_sigmas) {
  const double reach = radius_sigmas * sigma_px + 1.0;
  const auto c0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(x_px - reach)));
  const auto c1 = std::min<Eigen::Index>(canvas.cols() - 1, static_cast<Eigen::Index>(std::ceil(x_px + reach)));
  const auto r0 = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::floor(y_px - reach)));
  const auto r1 = std::min<Eigen::Index>(canvas.rows() - 1, static_cast<Eigen::Index>(std::ceil(y_px + reach)));
  if (c0 > c1 || r0 > r1) return;

  Eigen::ArrayXd col_mass(c1 - c0 + 1);
  for (Eigen::Index c = c0; c <= c1; ++c) col_mass(c - c0) = pixel_mass(static_cast<double>(c), x_px, sigma_px);
  Eigen::ArrayXd row_mass(r1 - r0 + 1);
  for (Eigen::Index r = r0; r <= r1; ++r) row_mass(r - r0) = pixel_mass(static_cast<double>(r), y_px, sigma_px);

  canvas.block(r0, c0, row_mass.size(), col_mass.size()) +=
      weight * (row_mass.matrix() * col_mass.matrix().transpose()).array();
}

PlaneImage dh_psf_patch(double defocus_um, const DhPsfParams& params, SubpixelOffset offset, int patch_px) {
  require_odd_patch(patch_px);
  if (std::abs(defocus_um) > 2.0 * params.z_range_um) {
    throw OutOfRange("defocus " + std::to_string(defocus_um) + " um exceeds twice the DH range (" +
                     std::to_string(2.0 * params.z_range_um) + " um)");
  }
  const double center = (patch_px - 1) / 2 + 0.5;
  const double sigma = params.lobe_sigma(defocus_um);
  const double theta = params.lobe_angle(defocus_um);
  const double half = 0.5 * params.lobe_distance_px;
  const double ux = half * std::cos(theta);
  const double uy = half * std::sin(theta);

  ImageArrayd canvas = ImageArrayd::Zero(patch_px, patch_px);
  const double cx = center + offset.x_px;
  const double cy = center + offset.y_px;
  accumulate_gaussian(canvas, cx + ux, cy + uy, sigma, 0.5);
  accumulate_gaussian(canvas, cx - ux, cy - uy, sigma, 0.5);
  return renormalized(std::move(canvas));
}

PlaneImage widefield_psf_patch(double defocus_um, const WidefieldPsfParams& params, SubpixelOffset offset,
                               int patch_px) {
  require_odd_patch(patch_px);
  const double center = (patch_px - 1) / 2 + 0.5;
  ImageArrayd canvas = ImageArrayd::Zero(patch_px, patch_px);
  accumulate_gaussian(canvas, center + offset.x_px, center + offset.y_px, params.sigma(defocus_um), 1.0);
  return renormalized(std::move(canvas));
}

BeadField generate_bead_field(int n, const FieldBounds& bounds, std::pair<double, double> photon_range,
                              double min_separation_um, std::uint64_t seed) {
  if (n < 0) throw InvalidArgument("emitter count must be non-negative");
  if (!(photon_range.first > 0) || photon_range.second < photon_range.first) {
    throw InvalidArgument("photon range must be positive and ordered");
  }
  if (!(min_separation_um >= 0)) throw InvalidArgument("minimum separation must be non-negative");
  if (bounds.width_um < 0 || bounds.height_um < 0 || bounds.z_max_um < bounds.z_min_um) {
    throw InvalidArgument("field bounds are malformed");
  }

  BeadField field;
  field.bounds = bounds;
  field.emitters.reserve(static_cast<std::size_t>(n));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(0.0, bounds.width_um);
  std::uniform_real_distribution<double> uy(0.0, bounds.height_um);
  std::uniform_real_distribution<double> uz(bounds.z_min_um, bounds.z_max_um);
  std::uniform_real_distribution<double> uphot(photon_range.first, photon_range.second);

  const double min_sep2 = min_separation_um * min_separation_um;
  const long long budget = 2000LL * (static_cast<long long>(n) + 1);
  long long attempts = 0;
  while (static_cast<int>(field.emitters.size()) < n) {
    if (++attempts > budget) {
      throw Error("infeasible bead density: placed only " + std::to_string(field.emitters.size()) + " of " +
                  std::to_string(n) + " emitters at separation " + std::to_string(min_separation_um) + " um");
    }
    Emitter e{ux(rng), uy(rng), uz(rng), uphot(rng)};
    const bool clear = std::none_of(field.emitters.begin(), field.emitters.end(), [&](const Emitter& o) {
      const double dx = o.x_um - e.x_um;
      const double dy = o.y_um - e.y_um;
      return dx * dx + dy * dy < min_sep2;
    });
    if (clear) field.emitters.push_back(e);
  }
  return field;
}

PlaneImage render_plane(const BeadField& field, double z_plane_um, const PsfModel& psf,
                        const OpticalConfig& config, Eigen::Index height, Eigen::Index width) {
  PlaneImage out(height, width, config.pixel_size_nm, z_plane_um);
  const double um_to_px = 1000.0 / config.pixel_size_nm;
  for (const Emitter& e : field.emitters) {
    const double x = e.x_um * um_to_px;
    const double y = e.y_um * um_to_px;
    const double defocus = z_plane_um - e.z_um;
    switch (psf.mode) {
      case PsfMode::double_helix: {
        const double sigma = psf.dh.lobe_sigma(defocus);
        const double theta = psf.dh.lobe_angle(defocus);
        const double ux = 0.5 * psf.dh.lobe_distance_px * std::cos(theta);
        const double uy = 0.5 * psf.dh.lobe_distance_px * std::sin(theta);
        accumulate_gaussian(out.pixels, x + ux, y + uy, sigma, 0.5 * e.photons);
        accumulate_gaussian(out.pixels, x - ux, y - uy, sigma, 0.5 * e.photons);
        break;
      }
      case PsfMode::widefield:
        accumulate_gaussian(out.pixels, x, y, psf.widefield.sigma(defocus), e.photons);
        break;
      case PsfMode::confocal:
        if (std::abs(defocus) <= config.native_dof_um + 1e-12) {
          accumulate_gaussian(out.pixels, x, y, psf.confocal_sigma_px(), e.photons);
        }
        break;
    }
  }
  return out;
}

PlaneImage add_noise(const PlaneImage& img, const NoiseParams& noise) {
  validate(noise);
  if ((img.pixels < 0.0).any()) throw InvalidArgument("add_noise requires non-negative pixel values");

  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> read(0.0, 1.0);
  PlaneImage out = img;
  for (Eigen::Index i = 0; i < out.pixels.size(); ++i) {
    const double mean = img.pixels(i) + noise.background_photons;
    double v = 0.0;
    if (mean > 0.0) v = static_cast<double>(std::poisson_distribution<long long>(mean)(rng));
    if (noise.read_sigma > 0.0) v += noise.read_sigma * read(rng);
    out.pixels(i) = std::clamp(v, 0.0, noise.full_well);
  }
  return out;
}

double principal_axis_angle(const PlaneImage& img) {
  double total = 0.0;
  double mx = 0.0;
  double my = 0.0;
  for (Eigen::Index r = 0; r < img.height(); ++r) {
    for (Eigen::Index c = 0; c < img.width(); ++c) {
      const double w = img(r, c);
      total += w;
      mx += w * (c + 0.5);
      my += w * (r + 0.5);
    }
  }
  if (!(total > 0.0)) throw InvalidArgument("principal axis of an empty image is undefined");
  mx /= total;
  my /= total;
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (Eigen::Index r = 0; r < img.height(); ++r) {
    for (Eigen::Index c = 0; c < img.width(); ++c) {
      const double w = img(r, c);
      const double dx = c + 0.5 - mx;
      const double dy = r + 0.5 - my;
      sxx += w * dx * dx;
      syy += w * dy * dy;
      sxy += w * dx * dy;
    }
  }
  double angle = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  if (angle <= -std::numbers::pi / 2) angle += std::numbers::pi;
  return angle;
}

}  // namespace dhrb
