#include "dhrb/fft2.hpp"

namespace dhrb {

void Fft2d::transform(ComplexImage& data, bool inverse) const {
  const Eigen::Index rows = data.rows();
  const Eigen::Index cols = data.cols();

  in_.resize(static_cast<std::size_t>(cols));
  for (Eigen::Index r = 0; r < rows; ++r) {
    std::copy(data.row(r).begin(), data.row(r).end(), in_.begin());
    if (inverse) {
      fft_.inv(out_, in_);
    } else {
      fft_.fwd(out_, in_);
    }
    std::copy(out_.begin(), out_.end(), data.row(r).begin());
  }

  in_.resize(static_cast<std::size_t>(rows));
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) in_[static_cast<std::size_t>(r)] = data(r, c);
    if (inverse) {
      fft_.inv(out_, in_);
    } else {
      fft_.fwd(out_, in_);
    }
    for (Eigen::Index r = 0; r < rows; ++r) data(r, c) = out_[static_cast<std::size_t>(r)];
  }
}

ComplexImage Fft2d::forward(const ImageArrayd& real) const { return forward(real.cast<std::complex<double>>().eval()); }

ComplexImage Fft2d::forward(ComplexImage data) const {
  transform(data, false);
  return data;
}

ComplexImage Fft2d::inverse(ComplexImage spectrum) const {
  transform(spectrum, true);
  return spectrum;
}

ImageArrayd Fft2d::inverse_real(ComplexImage spectrum) const {
  transform(spectrum, true);
  return spectrum.real();
}

std::pair<ComplexImage, ComplexImage> Fft2d::forward_pair(const ImageArrayd& a, const ImageArrayd& b) const {
  const Eigen::Index rows = a.rows();
  const Eigen::Index cols = a.cols();
  ComplexImage z(rows, cols);
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = {a(i), b(i)};
  transform(z, false);

  // Z = A + iB with A, B Hermitian: A(k) = (Z(k) + conj Z(-k)) / 2, B(k) = (Z(k) - conj Z(-k)) / 2i.
  ComplexImage fa(rows, cols);
  ComplexImage fb(rows, cols);
  const std::complex<double> half_i(0.0, 0.5);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::Index rm = r == 0 ? 0 : rows - r;
    for (Eigen::Index c = 0; c < cols; ++c) {
      const Eigen::Index cm = c == 0 ? 0 : cols - c;
      const std::complex<double> zk = z(r, c);
      const std::complex<double> zm = std::conj(z(rm, cm));
      fa(r, c) = 0.5 * (zk + zm);
      fb(r, c) = -half_i * (zk - zm);
    }
  }
  return {std::move(fa), std::move(fb)};
}

}  // namespace dhrb
