#include "dhrb/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace dhrb {

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  std::string s = buf;
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

namespace {

std::string optional_field(const std::optional<double>& v, int decimals) {
  return v ? format_fixed(*v, decimals) : std::string{};
}

}  // namespace

void write_dof_table_csv(std::ostream& out, const std::vector<DofReport>& reports) {
  out << "tolerance,ji_threshold,dof_um,avg_rmse_nm\n";
  for (const DofReport& r : reports) {
    out << format_fixed(r.tolerance, 2) << ',' << format_fixed(r.ji_threshold, 3) << ','
        << format_fixed(r.dof_um, 3) << ',' << optional_field(r.avg_rmse_nm, 2) << '\n';
  }
}

void write_curve_csv(std::ostream& out, const std::vector<PlaneMetrics>& curve) {
  out << "z_um,ji,rmse_nm,pearson\n";
  for (const PlaneMetrics& p : curve) {
    out << format_fixed(p.z_um, 3) << ',' << format_fixed(p.ji, 4) << ',' << optional_field(p.rmse_nm, 2) << ','
        << optional_field(p.pearson, 4) << '\n';
  }
}

void write_svg_plot(std::ostream& out, const std::string& title, const std::string& x_label,
                    const std::string& y_label, const std::vector<SvgSeries>& series) {
  constexpr double kWidth = 640;
  constexpr double kHeight = 400;
  constexpr double kLeft = 70;
  constexpr double kRight = 20;
  constexpr double kTop = 40;
  constexpr double kBottom = 50;
  static const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

  double x0 = std::numeric_limits<double>::infinity();
  double x1 = -x0;
  double y0 = x0;
  double y1 = -x0;
  for (const SvgSeries& s : series) {
    for (const auto& [x, y] : s.points) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      if (y) {
        y0 = std::min(y0, *y);
        y1 = std::max(y1, *y);
      }
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1;
  if (!std::isfinite(y0)) y0 = 0, y1 = 1;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  y0 = std::min(y0, 0.0);

  const auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); };
  const auto py = [&](double y) { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kWidth - kLeft - kRight << "\" height=\""
      << kHeight - kTop - kBottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">" << x_label
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << kHeight / 2 << ")\">" << y_label << "</text>\n";
  out << "<text x=\"" << kLeft << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\">"
      << format_fixed(x0, 2) << "</text>\n";
  out << "<text x=\"" << kWidth - kRight << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\">"
      << format_fixed(x1, 2) << "</text>\n";
  out << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(y0) << "\" text-anchor=\"end\">" << format_fixed(y0, 2)
      << "</text>\n";
  out << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(y1) + 4 << "\" text-anchor=\"end\">" << format_fixed(y1, 2)
      << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kColors[k % std::size(kColors)];
    std::string run;
    const auto flush = [&] {
      if (!run.empty()) {
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << run
            << "\"/>\n";
        run.clear();
      }
    };
    for (const auto& [x, y] : series[k].points) {
      if (!y) {
        flush();
        continue;
      }
      if (!run.empty()) run += ' ';
      run += format_fixed(px(x), 2) + "," + format_fixed(py(*y), 2);
    }
    flush();
    out << "<text x=\"" << kWidth - kRight - 6 << "\" y=\"" << kTop + 16 + 14 * static_cast<double>(k)
        << "\" text-anchor=\"end\" fill=\"" << color << "\">" << series[k].label << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace dhrb
