#ifndef DHRB_IMAGE_HPP
#define DHRB_IMAGE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace dhrb {

template <typename Scalar>
using ImageArray = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using ImageArrayd = ImageArray<double>;

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad size, bad parameter).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A value lies outside the range a model is valid for.
class OutOfRange : public Error {
 public:
  using Error::Error;
};

/// Single-channel 2D image in photon units.
///
/// Lateral coordinates follow the pixel-area convention: pixel (r, c) covers
/// [c, c+1) x [r, r+1) in pixel units, so its center sits at (c + 0.5, r + 0.5).
template <typename Scalar>
struct BasicPlaneImage {
  ImageArray<Scalar> pixels;
  double pixel_size_nm = 72.0;
  double z_plane_um = 0.0;

  BasicPlaneImage() = default;
  BasicPlaneImage(Eigen::Index height, Eigen::Index width, double pixel_nm = 72.0, double z_um = 0.0)
      : pixels(ImageArray<Scalar>::Zero(height, width)), pixel_size_nm(pixel_nm), z_plane_um(z_um) {
    if (height <= 0 || width <= 0) throw InvalidArgument("image dimensions must be positive");
  }
  BasicPlaneImage(ImageArray<Scalar> values, double pixel_nm = 72.0, double z_um = 0.0)
      : pixels(std::move(values)), pixel_size_nm(pixel_nm), z_plane_um(z_um) {}

  Eigen::Index height() const { return pixels.rows(); }
  Eigen::Index width() const { return pixels.cols(); }
  Eigen::Index size() const { return pixels.size(); }

  Scalar& operator()(Eigen::Index r, Eigen::Index c) { return pixels(r, c); }
  Scalar operator()(Eigen::Index r, Eigen::Index c) const { return pixels(r, c); }

  bool same_shape(const BasicPlaneImage& other) const {
    return height() == other.height() && width() == other.width();
  }
  bool all_finite() const { return pixels.isFinite().all(); }
};

using PlaneImage = BasicPlaneImage<double>;

inline void require_same_shape(const PlaneImage& a, const PlaneImage& b, const char* what) {
  if (!a.same_shape(b)) {
    throw InvalidArgument(std::string(what) + ": shape mismatch (" + std::to_string(a.height()) + "x" +
                          std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                          std::to_string(b.width()) + ")");
  }
}

/// Maps a circular index in [0, n) to the signed range (-n/2, n/2].
inline Eigen::Index wrap_signed(Eigen::Index k, Eigen::Index n) {
  k %= n;
  if (k < 0) k += n;
  return k > n / 2 ? k - n : k;
}

inline double wrap_signed(double k, double n) {
  double w = std::fmod(k, n);
  if (w < 0) w += n;
  return w > n / 2 ? w - n : w;
}

inline Eigen::Index wrap_index(Eigen::Index k, Eigen::Index n) {
  k %= n;
  return k < 0 ? k + n : k;
}

}  // namespace dhrb

#endif  // DHRB_IMAGE_HPP
