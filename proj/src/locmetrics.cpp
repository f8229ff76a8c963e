#include "dhrb/locmetrics.hpp"

#include "dhrb/assignment.hpp"
#include "dhrb/parallel.hpp"
#include "dhrb/preprocess.hpp"

#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dhrb {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

inline double pixel_mass(double lo, double mu, double sigma) {
  const double s = kInvSqrt2 / sigma;
  return 0.5 * (std::erf((lo + 1.0 - mu) * s) - std::erf((lo - mu) * s));
}

// Residuals of an integrated 2D Gaussian on a constant background over a
// rectangular window. Parameters: amplitude (integrated), x, y, sigma, background.
struct GaussianResiduals {
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  const ImageArrayd* window = nullptr;
  double origin_x = 0.0;  // frame coordinates of the window's top-left corner
  double origin_y = 0.0;

  int inputs() const { return 5; }
  int values() const { return static_cast<int>(window->size()); }

  int operator()(const Eigen::VectorXd& p, Eigen::VectorXd& residual) const {
    const double sigma = std::max(std::abs(p(3)), 1e-3);
    const Eigen::Index rows = window->rows();
    const Eigen::Index cols = window->cols();
    Eigen::ArrayXd mx(cols);
    Eigen::ArrayXd my(rows);
    for (Eigen::Index c = 0; c < cols; ++c) mx(c) = pixel_mass(origin_x + static_cast<double>(c), p(1), sigma);
    for (Eigen::Index r = 0; r < rows; ++r) my(r) = pixel_mass(origin_y + static_cast<double>(r), p(2), sigma);
    Eigen::Index k = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c, ++k) residual(k) = p(0) * my(r) * mx(c) + p(4) - (*window)(r, c);
    }
    return 0;
  }
};

struct Component {
  double sum = 0.0;
  double sx = 0.0;
  double sy = 0.0;
  int pixels = 0;
};

std::array<double, 2> refine_gaussian(const PlaneImage& img, double cx, double cy, int fit_window) {
  const Eigen::Index wr = std::min<Eigen::Index>(fit_window, img.height());
  const Eigen::Index wc = std::min<Eigen::Index>(fit_window, img.width());
  const auto center_c = static_cast<Eigen::Index>(std::floor(cx));
  const auto center_r = static_cast<Eigen::Index>(std::floor(cy));
  const Eigen::Index c0 = std::clamp<Eigen::Index>(center_c - wc / 2, 0, img.width() - wc);
  const Eigen::Index r0 = std::clamp<Eigen::Index>(center_r - wr / 2, 0, img.height() - wr);
  const ImageArrayd window = img.pixels.block(r0, c0, wr, wc);

  GaussianResiduals f;
  f.window = &window;
  f.origin_x = static_cast<double>(c0);
  f.origin_y = static_cast<double>(r0);

  const double bg = window.minCoeff();
  Eigen::VectorXd p(5);
  p << std::max((window - bg).sum(), 1e-12), cx, cy, 1.0, bg;

  Eigen::NumericalDiff<GaussianResiduals> functor(f);
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<GaussianResiduals>> lm(functor);
  lm.parameters.maxfev = 400;
  lm.minimize(p);

  const double sigma = std::abs(p(3));
  const bool plausible = p.allFinite() && p(0) > 0 && sigma > 0.3 && sigma < 6.0 &&
                         std::hypot(p(1) - cx, p(2) - cy) <= 1.5;
  if (!plausible) return {cx, cy};
  return {p(1), p(2)};
}

}  // namespace

LocalizationSet detect_beads(const PlaneImage& img, const DetectOptions& options) {
  const Eigen::Index rows = img.height();
  const Eigen::Index cols = img.width();
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> seen =
      (img.pixels <= options.threshold).eval();

  LocalizationSet out;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> stack;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (seen(r, c)) continue;
      Component comp;
      seen(r, c) = true;
      stack.assign(1, {r, c});
      while (!stack.empty()) {
        const auto [pr, pc] = stack.back();
        stack.pop_back();
        const double w = img(pr, pc);
        comp.sum += w;
        comp.sx += w * (static_cast<double>(pc) + 0.5);
        comp.sy += w * (static_cast<double>(pr) + 0.5);
        ++comp.pixels;
        for (Eigen::Index dr = -1; dr <= 1; ++dr) {
          for (Eigen::Index dc = -1; dc <= 1; ++dc) {
            const Eigen::Index nr = pr + dr;
            const Eigen::Index nc = pc + dc;
            if (nr < 0 || nc < 0 || nr >= rows || nc >= cols || seen(nr, nc)) continue;
            seen(nr, nc) = true;
            stack.emplace_back(nr, nc);
          }
        }
      }
      if (comp.pixels < options.min_pixels || !(comp.sum > 0)) continue;
      double x = comp.sx / comp.sum;
      double y = comp.sy / comp.sum;
      if (options.gaussian_refine) {
        const auto refined = refine_gaussian(img, x, y, options.fit_window);
        x = refined[0];
        y = refined[1];
      }
      out.push_back({x * img.pixel_size_nm, y * img.pixel_size_nm, comp.sum});
    }
  }
  return out;
}

LocalizationSet truth_localizations(const BeadField& field, double z_center_um, double slab_um) {
  LocalizationSet out;
  for (const Emitter& e : field.emitters) {
    if (std::abs(e.z_um - z_center_um) <= slab_um + 1e-12) out.push_back({e.x_um * 1000.0, e.y_um * 1000.0, e.photons});
  }
  return out;
}

double MatchResult::total_distance() const {
  std::vector<double> d;
  d.reserve(pairs.size());
  for (const MatchedPair& p : pairs) d.push_back(p.distance_nm);
  std::sort(d.begin(), d.end());
  return std::accumulate(d.begin(), d.end(), 0.0);
}

MatchResult match_localizations(const LocalizationSet& detected, const LocalizationSet& truth, double radius_nm) {
  if (!(radius_nm > 0)) throw InvalidArgument("match radius must be positive");

  // Only points with at least one partner in range take part in the assignment.
  std::vector<std::size_t> rows;
  std::vector<std::size_t> cols;
  std::vector<char> truth_used(truth.size(), 0);
  for (std::size_t i = 0; i < detected.size(); ++i) {
    bool any = false;
    for (std::size_t j = 0; j < truth.size(); ++j) {
      if (std::hypot(detected[i].x_nm - truth[j].x_nm, detected[i].y_nm - truth[j].y_nm) <= radius_nm) {
        any = true;
        truth_used[j] = 1;
      }
    }
    if (any) rows.push_back(i);
  }
  for (std::size_t j = 0; j < truth.size(); ++j) {
    if (truth_used[j]) cols.push_back(j);
  }

  MatchResult m;
  const std::size_t n = std::max(rows.size(), cols.size());
  if (n > 0) {
    // Any real pair beats an out-of-range slot: big > n * radius.
    const double big = 2.0 * radius_nm * static_cast<double>(n + 1);
    Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n), big);
    for (std::size_t a = 0; a < rows.size(); ++a) {
      for (std::size_t b = 0; b < cols.size(); ++b) {
        const Localization& d = detected[rows[a]];
        const Localization& t = truth[cols[b]];
        const double dist = std::hypot(d.x_nm - t.x_nm, d.y_nm - t.y_nm);
        if (dist <= radius_nm) cost(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = dist;
      }
    }
    const std::vector<int> assignment = solve_assignment(cost);
    for (std::size_t a = 0; a < rows.size(); ++a) {
      const auto b = static_cast<std::size_t>(assignment[a]);
      if (b >= cols.size()) continue;
      const double dist = cost(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      if (dist <= radius_nm) m.pairs.push_back({rows[a], cols[b], dist});
    }
  }
  m.tp = m.pairs.size();
  m.fp = detected.size() - m.tp;
  m.fn = truth.size() - m.tp;
  return m;
}

double jaccard_index(const MatchResult& m) {
  const std::size_t denom = m.tp + m.fp + m.fn;
  if (denom == 0) throw InvalidArgument("Jaccard index is undefined with no detections and no truths");
  return static_cast<double>(m.tp) / static_cast<double>(denom);
}

std::optional<double> lateral_rmse(const MatchResult& m) {
  if (m.pairs.empty()) return std::nullopt;
  double acc = 0.0;
  for (const MatchedPair& p : m.pairs) acc += p.distance_nm * p.distance_nm;
  return std::sqrt(acc / static_cast<double>(m.pairs.size()));
}

std::vector<double> make_z_grid(double z_min_um, double z_max_um, double step_um) {
  if (!(step_um > 0) || z_max_um < z_min_um) throw InvalidArgument("z grid needs z_min <= z_max and a positive step");
  const auto n = static_cast<long long>(std::floor((z_max_um - z_min_um) / step_um + 1e-9));
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(n + 1));
  for (long long i = 0; i <= n; ++i) {
    const double z = z_min_um + static_cast<double>(i) * step_um;
    grid.push_back(std::round(z * 1e9) / 1e9);
  }
  return grid;
}

double native_ji(const std::vector<PlaneMetrics>& curve, double native_dof_um, double target_z_um) {
  double acc = 0.0;
  int count = 0;
  for (const PlaneMetrics& p : curve) {
    if (std::abs(p.z_um - target_z_um) <= native_dof_um + 1e-9) {
      acc += p.ji;
      ++count;
    }
  }
  if (count == 0) throw InvalidArgument("no z plane lies within the native depth of field");
  return acc / count;
}

std::vector<DofReport> dof_reports(const std::vector<PlaneMetrics>& curve, const std::vector<double>& tolerances,
                                   double native_ji_value, double target_z_um) {
  if (curve.empty()) throw InvalidArgument("empty JI curve");
  std::size_t center = 0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (std::abs(curve[i].z_um - target_z_um) < std::abs(curve[center].z_um - target_z_um)) center = i;
  }

  std::vector<DofReport> reports;
  for (double t : tolerances) {
    if (!(t >= 0.0 && t < 1.0)) throw InvalidArgument("tolerance must lie in [0, 1)");
    DofReport rep;
    rep.tolerance = t;
    rep.ji_threshold = (1.0 - t) * native_ji_value;
    rep.z_low_um = rep.z_high_um = curve[center].z_um;
    const auto qualifies = [&](std::size_t i) { return curve[i].ji >= rep.ji_threshold - 1e-12; };
    if (qualifies(center)) {
      std::size_t lo = center;
      std::size_t hi = center;
      while (lo > 0 && qualifies(lo - 1)) --lo;
      while (hi + 1 < curve.size() && qualifies(hi + 1)) ++hi;
      rep.z_low_um = curve[lo].z_um;
      rep.z_high_um = curve[hi].z_um;
      rep.dof_um = rep.z_high_um - rep.z_low_um;
      double acc = 0.0;
      int n = 0;
      for (std::size_t i = lo; i <= hi; ++i) {
        if (curve[i].rmse_nm) {
          acc += *curve[i].rmse_nm;
          ++n;
        }
      }
      if (n > 0) rep.avg_rmse_nm = acc / n;
    }
    reports.push_back(rep);
  }
  return reports;
}

SweepResult dof_sweep(const Refocuser& refocuser, const BeadField& scene, const std::vector<double>& z_grid,
                      const std::vector<double>& tolerances, const SweepConfig& config) {
  if (z_grid.empty() || !std::is_sorted(z_grid.begin(), z_grid.end())) throw InvalidArgument("z grid must be sorted");
  const auto target_it = std::find_if(z_grid.begin(), z_grid.end(),
                                      [&](double z) { return std::abs(z - config.target_z_um) <= 1e-9; });
  if (target_it == z_grid.end()) throw InvalidArgument("z grid must include the target plane");
  const auto target_index = static_cast<std::size_t>(std::distance(z_grid.begin(), target_it));

  const LocalizationSet truth = truth_localizations(scene, config.target_z_um, config.optics.native_dof_um);
  if (truth.empty()) throw InvalidArgument("scene has no emitters within the native depth of field of the target plane");

  PsfModel confocal = config.input_psf;
  confocal.mode = PsfMode::confocal;
  const PlaneImage ground_truth =
      render_plane(scene, config.target_z_um, confocal, config.optics, config.height, config.width);

  const auto refocus_at = [&](std::size_t i) {
    const double z = z_grid[i];
    PlaneImage input = render_plane(scene, z, config.input_psf, config.optics, config.height, config.width);
    if (config.noise) {
      NoiseParams noise = *config.noise;
      noise.seed += i;
      input = add_noise(input, noise);
    }
    try {
      PlaneImage out = refocuser(input, z);
      require_same_shape(out, ground_truth, "refocuser output");
      out.pixel_size_nm = config.optics.pixel_size_nm;
      return out;
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << "refocuser failed at z = " << z << " um: " << e.what();
      throw Error(msg.str());
    }
  };

  const PlaneImage reference = subtract_background(refocus_at(target_index), config.saturation_level);
  const double scale = reference.pixels.maxCoeff();
  if (!(scale > 0)) throw Error("refocuser output at the target plane is blank");

  SweepResult result;
  result.curve.resize(z_grid.size());
  parallel_for(z_grid.size(), thread_count(config.threads), [&](std::size_t i) {
    PlaneImage out = i == target_index ? reference : subtract_background(refocus_at(i), config.saturation_level);
    out.pixels /= scale;
    const LocalizationSet found = detect_beads(out, DetectOptions{config.detect_threshold, config.min_pixels});
    const MatchResult m = match_localizations(found, truth, config.match_radius_nm);
    PlaneMetrics& p = result.curve[i];
    p.z_um = z_grid[i];
    p.ji = jaccard_index(m);
    p.rmse_nm = lateral_rmse(m);
    p.tp = m.tp;
    p.fp = m.fp;
    p.fn = m.fn;
    try {
      p.pearson = correlation_coefficient(out, ground_truth);
    } catch (const InvalidArgument&) {
      p.pearson.reset();
    }
  });

  result.native_ji = native_ji(result.curve, config.optics.native_dof_um, config.target_z_um);
  result.reports = dof_reports(result.curve, tolerances, result.native_ji, config.target_z_um);
  return result;
}

Refocuser identity_refocuser() {
  return [](const PlaneImage& input, double) { return input; };
}

Refocuser oracle_refocuser(const BeadField& scene, const SweepConfig& config) {
  PsfModel confocal = config.input_psf;
  confocal.mode = PsfMode::confocal;
  PlaneImage target = render_plane(scene, config.target_z_um, confocal, config.optics, config.height, config.width);
  return [target = std::move(target)](const PlaneImage&, double) { return target; };
}

}  // namespace dhrb
