// Independent reference implementations shared by the unit and acceptance tests.
#ifndef DHRB_TESTS_ORACLES_HPP
#define DHRB_TESTS_ORACLES_HPP

#include "dhrb/locmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

namespace oracle {

// Integer-exact triangle threshold: the signed height gap between the chord and
// each bin, scaled by |e - p| so everything stays in integers.
inline std::size_t triangle_threshold(const std::vector<std::int64_t>& h) {
  std::size_t p = 0;
  for (std::size_t i = 1; i < h.size(); ++i) {
    if (h[i] > h[p]) p = i;
  }
  std::size_t e = h.size() - 1;
  while (h[e] == 0) --e;
  if (e == p) {
    e = 0;
    while (h[e] == 0) ++e;
  }
  if (e == p) return p;
  const auto P = static_cast<__int128>(p);
  const auto E = static_cast<__int128>(e);
  const __int128 span = E > P ? E - P : P - E;
  std::size_t best = 0;
  __int128 best_gap = 0;
  bool first = true;
  const long step = e > p ? 1 : -1;
  for (long i = static_cast<long>(p) + step;; i += step) {
    // chord(i) * span = h_p * span + (h_e - h_p) * |i - p|
    const __int128 off = i > static_cast<long>(p) ? i - P : P - i;
    const __int128 chord = static_cast<__int128>(h[p]) * span + (static_cast<__int128>(h[e]) - h[p]) * off;
    const __int128 gap = chord - static_cast<__int128>(h[static_cast<std::size_t>(i)]) * span;
    if (first || gap > best_gap) {
      best_gap = gap;
      best = static_cast<std::size_t>(i);
      first = false;
    }
    if (i == static_cast<long>(e)) break;
  }
  return best;
}

// Exhaustive matching: every injective assignment of the smaller set into the
// larger one; keep the most pairs within radius, then the least total distance.
inline std::pair<std::size_t, double> exhaustive_match(const dhrb::LocalizationSet& det, const dhrb::LocalizationSet& truth,
                                                 double radius) {
  const bool det_small = det.size() <= truth.size();
  const dhrb::LocalizationSet& small = det_small ? det : truth;
  const dhrb::LocalizationSet& large = det_small ? truth : det;
  std::vector<std::size_t> perm(large.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best_count = 0;
  double best_cost = 0.0;
  do {
    std::vector<double> dists;
    for (std::size_t i = 0; i < small.size(); ++i) {
      const dhrb::Localization& a = small[i];
      const dhrb::Localization& b = large[perm[i]];
      const double d = std::hypot(a.x_nm - b.x_nm, a.y_nm - b.y_nm);
      if (d <= radius) dists.push_back(d);
    }
    std::sort(dists.begin(), dists.end());
    double cost = 0.0;
    for (double d : dists) cost += d;
    if (dists.size() > best_count || (dists.size() == best_count && cost < best_cost)) {
      best_count = dists.size();
      best_cost = cost;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {best_count, best_cost};
}

}  // namespace oracle

#endif  // DHRB_TESTS_ORACLES_HPP
