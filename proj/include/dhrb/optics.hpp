#ifndef DHRB_OPTICS_HPP
#define DHRB_OPTICS_HPP

#include "dhrb/image.hpp"

#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

namespace dhrb {

struct OpticalConfig {
  double pixel_size_nm = 72.0;  // 73.7 um field over 1024 px
  double wavelength_nm = 580.0;
  double numerical_aperture = 1.4;
  double magnification = 63.0;
  double native_dof_um = 0.15;
};

void validate(const OpticalConfig& config);

struct Emitter {
  double x_um = 0.0;
  double y_um = 0.0;
  double z_um = 0.0;
  double photons = 1.0;
};

struct FieldBounds {
  double width_um = 0.0;
  double height_um = 0.0;
  double z_min_um = 0.0;
  double z_max_um = 0.0;

  bool contains(const Emitter& e) const {
    return e.x_um >= 0.0 && e.x_um <= width_um && e.y_um >= 0.0 && e.y_um <= height_um &&
           e.z_um >= z_min_um && e.z_um <= z_max_um;
  }
};

/// Bounds covering a `height` x `width` pixel frame.
FieldBounds frame_bounds(Eigen::Index height, Eigen::Index width, const OpticalConfig& config, double z_min_um,
                         double z_max_um);

/// Ground-truth emitter list.
struct BeadField {
  std::vector<Emitter> emitters;
  FieldBounds bounds;

  /// Checks that every emitter lies inside the bounds with a positive photon count.
  void validate() const;
  BeadField merged_with(const BeadField& other) const;
};

/// Parametric double-helix PSF: two Gaussian lobes whose axis rotates linearly with defocus.
struct DhPsfParams {
  double lobe_sigma0_px = 1.5;
  double lobe_distance_px = 8.0;
  double theta0_rad = 0.0;
  double omega_rad_per_um = std::numbers::pi / 12.0;  // 15 deg/um
  double z_range_um = 6.0;
  double sigma_growth_per_um = 0.05;

  double lobe_sigma(double defocus_um) const;
  double lobe_angle(double defocus_um) const { return theta0_rad + omega_rad_per_um * defocus_um; }
};

void validate(const DhPsfParams& params);

struct WidefieldPsfParams {
  double sigma0_px = 1.2;
  double z_rayleigh_um = 0.15;

  double sigma(double defocus_um) const;
};

void validate(const WidefieldPsfParams& params);

struct NoiseParams {
  double background_photons = 5.0;
  double read_sigma = 2.0;
  double full_well = 60000.0;
  std::uint64_t seed = 0;
};

void validate(const NoiseParams& params);

enum class PsfMode { double_helix, widefield, confocal };

/// Everything render_plane needs to know about the PSF family in use.
struct PsfModel {
  PsfMode mode = PsfMode::widefield;
  DhPsfParams dh;
  WidefieldPsfParams widefield;

  /// Width of the narrow fixed Gaussian used for the confocal target.
  double confocal_sigma_px() const { return 0.7 * widefield.sigma0_px; }
};

/// Subpixel position of the PSF center relative to the center of the middle patch pixel.
struct SubpixelOffset {
  double x_px = 0.0;
  double y_px = 0.0;
};

PlaneImage dh_psf_patch(double defocus_um, const DhPsfParams& params, SubpixelOffset offset, int patch_px);

PlaneImage widefield_psf_patch(double defocus_um, const WidefieldPsfParams& params, SubpixelOffset offset,
                               int patch_px);

/// Adds `weight` times a pixel-integrated isotropic Gaussian centered at (x_px, y_px),
/// in the continuous frame coordinates of `canvas`. Contributions farther than
/// `radius_sigmas` standard deviations are dropped.
void accumulate_gaussian(ImageArrayd& canvas, double x_px, double y_px, double sigma_px, double weight,
                         double radius_sigmas = 6.0);

BeadField generate_bead_field(int n, const FieldBounds& bounds, std::pair<double, double> photon_range,
                              double min_separation_um, std::uint64_t seed);

PlaneImage render_plane(const BeadField& field, double z_plane_um, const PsfModel& psf,
                        const OpticalConfig& config, Eigen::Index height, Eigen::Index width);

inline PlaneImage render_plane(const BeadField& field, double z_plane_um, const PsfModel& psf,
                               const OpticalConfig& config, Eigen::Index size_px) {
  return render_plane(field, z_plane_um, psf, config, size_px, size_px);
}

PlaneImage add_noise(const PlaneImage& img, const NoiseParams& noise);

/// Principal-axis angle of the intensity second moments, in (-pi/2, pi/2].
double principal_axis_angle(const PlaneImage& img);

}  // namespace dhrb

#endif  // DHRB_OPTICS_HPP
