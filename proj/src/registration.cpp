#include "dhrb/registration.hpp"

#include "dhrb/fft2.hpp"

#include <cmath>
#include <numbers>

namespace dhrb {

namespace {

ImageArrayd unit_zero_mean(const ImageArrayd& v, const char* which) {
  ImageArrayd centered = v - v.mean();
  const double norm = std::sqrt(centered.square().sum());
  const double scale = v.abs().maxCoeff();
  if (!(norm > 1e-12 * std::max(scale, 1e-300) * std::sqrt(static_cast<double>(v.size()))) || !std::isfinite(norm)) {
    throw InvalidArgument(std::string(which) + " image is constant (zero variance)");
  }
  return centered / norm;
}

}  // namespace

double CorrelationMap::interpolate(double r, double c) const {
  const double r0 = std::floor(r);
  const double c0 = std::floor(c);
  const double fr = r - r0;
  const double fc = c - c0;
  const auto ri = static_cast<Eigen::Index>(r0);
  const auto ci = static_cast<Eigen::Index>(c0);
  return (1 - fr) * ((1 - fc) * at(ri, ci) + fc * at(ri, ci + 1)) + fr * ((1 - fc) * at(ri + 1, ci) + fc * at(ri + 1, ci + 1));
}

CorrelationMap normalized_xcorr(const PlaneImage& a, const PlaneImage& b, CorrelationKind kind) {
  require_same_shape(a, b, "normalized_xcorr");
  const ImageArrayd a0 = unit_zero_mean(a.pixels, "input");
  const ImageArrayd b0 = unit_zero_mean(b.pixels, "target");

  const Fft2d fft;
  auto [fa, fb] = fft.forward_pair(a0, b0);
  ComplexImage cross = fa.conjugate() * fb;
  if (kind == CorrelationKind::phase) {
    const double floor = 1e-15 * cross.abs().maxCoeff();
    for (Eigen::Index i = 0; i < cross.size(); ++i) {
      const double m = std::abs(cross(i));
      cross(i) = m > floor ? cross(i) / m : std::complex<double>(0.0, 0.0);
    }
  }
  CorrelationMap map{fft.inverse_real(std::move(cross))};
  if (kind == CorrelationKind::phase) map.values = map.values.max(-1.0).min(1.0);
  return map;
}

PeakPair top_two_local_maxima(const CorrelationMap& corr, int min_separation_px) {
  if (min_separation_px < 1) throw InvalidArgument("minimum peak separation must be at least 1 px");
  const Eigen::Index rows = corr.rows();
  const Eigen::Index cols = corr.cols();

  PeakPair out;
  corr.values.maxCoeff(&out.first.row, &out.first.col);

  const double min_sep2 = static_cast<double>(min_separation_px) * min_separation_px;
  double best = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double dr = static_cast<double>(wrap_signed(r - out.first.row, rows));
      const double dc = static_cast<double>(wrap_signed(c - out.first.col, cols));
      if (dr * dr + dc * dc < min_sep2) continue;
      const double v = corr.values(r, c);
      if (v <= best) continue;
      bool is_max = true;
      for (Eigen::Index i = -1; i <= 1 && is_max; ++i) {
        for (Eigen::Index j = -1; j <= 1; ++j) {
          if ((i || j) && corr.at(r + i, c + j) > v) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) {
        best = v;
        out.second = {r, c};
        found = true;
      }
    }
  }
  if (!found) {
    out.second = out.first;
    out.degraded = true;
  }
  return out;
}

PeakEstimate subpixel_refine(const CorrelationMap& corr, IntegerPeak peak, int window) {
  if (window < 3 || window % 2 == 0) throw InvalidArgument("fit window must be odd and at least 3");
  const int half = window / 2;
  const int n = window * window;

  Eigen::MatrixXd design(n, 6);
  Eigen::VectorXd values(n);
  int k = 0;
  for (int dr = -half; dr <= half; ++dr) {
    for (int dc = -half; dc <= half; ++dc, ++k) {
      design.row(k) << 1.0, dr, dc, dr * dr, dr * dc, dc * dc;
      values(k) = corr.at(peak.row + dr, peak.col + dc);
    }
  }
  const Eigen::VectorXd q = design.colPivHouseholderQr().solve(values);

  PeakEstimate est;
  double off_r = 0.0;
  double off_c = 0.0;
  Eigen::Matrix2d hessian;
  hessian << 2 * q(3), q(4), q(4), 2 * q(5);
  const bool negative_definite = hessian(0, 0) < 0 && hessian.determinant() > 0;
  if (negative_definite && q.allFinite()) {
    const Eigen::Vector2d off = hessian.fullPivLu().solve(-Eigen::Vector2d(q(1), q(2)));
    if (std::abs(off(0)) <= half && std::abs(off(1)) <= half) {
      off_r = off(0);
      off_c = off(1);
    } else {
      est.degraded = true;
    }
  } else {
    est.degraded = true;
  }

  const double r = static_cast<double>(peak.row) + off_r;
  const double c = static_cast<double>(peak.col) + off_c;
  est.row = wrap_signed(r, static_cast<double>(corr.rows()));
  est.col = wrap_signed(c, static_cast<double>(corr.cols()));
  est.score = corr.interpolate(r, c);
  return est;
}

ShiftEstimate dppcm_shift(const PlaneImage& input, const PlaneImage& target, const DppcmOptions& options) {
  const CorrelationMap corr = normalized_xcorr(input, target, options.kind);
  const PeakPair peaks = top_two_local_maxima(corr, options.min_separation_px);

  ShiftEstimate out;
  const PeakEstimate first = subpixel_refine(corr, peaks.first, options.fit_window);
  out.peaks = {first, first};
  out.degraded = first.degraded;
  out.dx_px = first.col;
  out.dy_px = first.row;
  out.confidence = first.score;

  if (options.single_peak) return out;
  if (peaks.degraded) {
    out.degraded = true;
    return out;
  }
  const double second_value = corr.values(peaks.second.row, peaks.second.col);
  if (second_value < options.pair_ratio * corr.values(peaks.first.row, peaks.first.col)) return out;

  const PeakEstimate second = subpixel_refine(corr, peaks.second, options.fit_window);
  const auto rows = static_cast<double>(corr.rows());
  const auto cols = static_cast<double>(corr.cols());
  const double half_dr = 0.5 * wrap_signed(second.row - first.row, rows);
  const double half_dc = 0.5 * wrap_signed(second.col - first.col, cols);
  out.peaks = {first, second};
  out.dual_peak = true;
  out.degraded = first.degraded || second.degraded;
  out.dy_px = wrap_signed(first.row + half_dr, rows);
  out.dx_px = wrap_signed(first.col + half_dc, cols);
  out.confidence = 0.5 * (first.score + second.score);
  return out;
}

PlaneImage apply_shift(const PlaneImage& img, double dx_px, double dy_px, ShiftMethod method) {
  if (!std::isfinite(dx_px) || !std::isfinite(dy_px)) throw InvalidArgument("shift must be finite");
  const Eigen::Index rows = img.height();
  const Eigen::Index cols = img.width();
  PlaneImage out = img;

  if (method == ShiftMethod::fourier) {
    if (dx_px == 0.0 && dy_px == 0.0) return out;
    const Fft2d fft;
    ComplexImage spec = fft.forward(img.pixels);
    const double two_pi = 2.0 * std::numbers::pi;
    Eigen::ArrayXcd col_phase(cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      col_phase(c) = std::polar(1.0, -two_pi * signed_frequency(c, cols) * dx_px / static_cast<double>(cols));
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      const std::complex<double> row_phase =
          std::polar(1.0, -two_pi * signed_frequency(r, rows) * dy_px / static_cast<double>(rows));
      spec.row(r) *= (row_phase * col_phase).transpose();
    }
    out.pixels = fft.inverse_real(std::move(spec));
    return out;
  }

  out.pixels.setZero();
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double sr = static_cast<double>(r) - dy_px;
    const double r0 = std::floor(sr);
    const double fr = sr - r0;
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double sc = static_cast<double>(c) - dx_px;
      const double c0 = std::floor(sc);
      const double fc = sc - c0;
      double acc = 0.0;
      for (int i = 0; i <= 1; ++i) {
        for (int j = 0; j <= 1; ++j) {
          const double w = (i ? fr : 1.0 - fr) * (j ? fc : 1.0 - fc);
          if (w == 0.0) continue;
          const auto rr = static_cast<Eigen::Index>(r0) + i;
          const auto cc = static_cast<Eigen::Index>(c0) + j;
          if (rr < 0 || cc < 0 || rr >= rows || cc >= cols) continue;
          acc += w * img.pixels(rr, cc);
        }
      }
      out.pixels(r, c) = acc;
    }
  }
  return out;
}

}  // namespace dhrb
