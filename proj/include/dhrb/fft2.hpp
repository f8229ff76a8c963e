#ifndef DHRB_FFT2_HPP
#define DHRB_FFT2_HPP

#include "dhrb/image.hpp"

#include <unsupported/Eigen/FFT>

#include <complex>
#include <utility>
#include <vector>

namespace dhrb {

using ComplexImage = ImageArray<std::complex<double>>;

/// 2D discrete Fourier transform built from Eigen's 1D FFT (row pass, then column pass).
/// The inverse is scaled by 1/(rows*cols). One instance caches twiddle tables for
/// the sizes it has seen; it is not thread-safe, use one per thread.
class Fft2d {
 public:
  ComplexImage forward(const ImageArrayd& real) const;
  ComplexImage forward(ComplexImage data) const;
  ComplexImage inverse(ComplexImage spectrum) const;

  /// Real part of the inverse transform.
  ImageArrayd inverse_real(ComplexImage spectrum) const;

  /// Spectra of two real images of the same shape from a single complex transform.
  std::pair<ComplexImage, ComplexImage> forward_pair(const ImageArrayd& a, const ImageArrayd& b) const;

 private:
  void transform(ComplexImage& data, bool inverse) const;

  mutable Eigen::FFT<double> fft_;
  mutable std::vector<std::complex<double>> in_;
  mutable std::vector<std::complex<double>> out_;
};

/// Signed frequency index for bin k of an n-point transform: (-n/2, n/2].
inline double signed_frequency(Eigen::Index k, Eigen::Index n) { return static_cast<double>(wrap_signed(k, n)); }

}  // namespace dhrb

#endif  // DHRB_FFT2_HPP
