#ifndef DHRB_REPORT_HPP
#define DHRB_REPORT_HPP

#include "dhrb/locmetrics.hpp"

#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace dhrb {

/// `tolerance,ji_threshold,dof_um,avg_rmse_nm`; undefined RMSE is an empty field.
void write_dof_table_csv(std::ostream& out, const std::vector<DofReport>& reports);

/// `z_um,ji,rmse_nm,pearson`; undefined values are empty fields.
void write_curve_csv(std::ostream& out, const std::vector<PlaneMetrics>& curve);

struct SvgSeries {
  std::string label;
  std::vector<std::pair<double, std::optional<double>>> points;  // gaps where y is undefined
};

/// Minimal line plot: framed axes, tick labels at the extremes, one polyline per defined run.
void write_svg_plot(std::ostream& out, const std::string& title, const std::string& x_label,
                    const std::string& y_label, const std::vector<SvgSeries>& series);

/// Fixed-point formatting that never prints a negative zero.
std::string format_fixed(double value, int decimals);

}  // namespace dhrb

#endif  // DHRB_REPORT_HPP
