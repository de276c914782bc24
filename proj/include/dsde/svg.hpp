#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "dsde/linalg.hpp"

namespace dsde {

/// One polyline in a chart.
struct SvgSeries {
  std::string label;
  std::string color = "#1f77b4";
  std::vector<std::pair<double, double>> points;
};

namespace detail {

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace detail

/// Minimal static line chart; enough for quick looks at the emitted CSVs.
inline void write_line_svg(const std::string& file, const std::string& title,
                           const std::vector<SvgSeries>& series,
                           bool equal_axes = false) {
  const double W = 720, H = 480, L = 64, R = 16, T = 40, B = 44;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmin > xmax) { xmin = 0; xmax = 1; }
  if (ymin > ymax) { ymin = 0; ymax = 1; }
  if (xmax == xmin) { xmax += 1; xmin -= 1; }
  if (ymax == ymin) { ymax += 1; ymin -= 1; }
  if (equal_axes) {
    const double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);
    const double half = 0.55 * std::max(xmax - xmin, ymax - ymin);
    xmin = cx - half; xmax = cx + half;
    ymin = cy - half; ymax = cy + half;
  } else {
    const double padx = 0.03 * (xmax - xmin), pady = 0.05 * (ymax - ymin);
    xmin -= padx; xmax += padx;
    ymin -= pady; ymax += pady;
  }
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  std::ofstream out(file, std::ios::binary);
  if (!out) throw parameter_error("cannot open output file " + file);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='"
      << H << "' viewBox='0 0 " << W << " " << H << "'>\n";
  out << "<rect width='" << W << "' height='" << H << "' fill='white'/>\n";
  out << "<text x='" << W / 2 << "' y='24' text-anchor='middle' "
         "font-family='sans-serif' font-size='15'>" << title << "</text>\n";
  // axes with min/max labels
  out << "<line x1='" << L << "' y1='" << T << "' x2='" << L << "' y2='"
      << H - B << "' stroke='#444'/>\n";
  out << "<line x1='" << L << "' y1='" << H - B << "' x2='" << W - R
      << "' y2='" << H - B << "' stroke='#444'/>\n";
  out << "<text x='" << L << "' y='" << H - B + 18
      << "' font-family='sans-serif' font-size='11'>" << detail::svg_num(xmin)
      << "</text>\n";
  out << "<text x='" << W - R << "' y='" << H - B + 18
      << "' text-anchor='end' font-family='sans-serif' font-size='11'>"
      << detail::svg_num(xmax) << "</text>\n";
  out << "<text x='" << L - 6 << "' y='" << H - B
      << "' text-anchor='end' font-family='sans-serif' font-size='11'>"
      << detail::svg_num(ymin) << "</text>\n";
  out << "<text x='" << L - 6 << "' y='" << T + 4
      << "' text-anchor='end' font-family='sans-serif' font-size='11'>"
      << detail::svg_num(ymax) << "</text>\n";

  double legend_y = T + 8;
  for (const auto& s : series) {
    out << "<polyline fill='none' stroke='" << s.color
        << "' stroke-width='1.5' points='";
    for (auto [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      out << detail::svg_num(px(x)) << "," << detail::svg_num(py(y)) << " ";
    }
    out << "'/>\n";
    if (!s.label.empty()) {
      out << "<text x='" << W - R - 150 << "' y='" << legend_y
          << "' font-family='sans-serif' font-size='12' fill='" << s.color
          << "'>" << s.label << "</text>\n";
      legend_y += 16;
    }
  }
  out << "</svg>\n";
}

/// Circle helper for phase-plane charts (disk boundaries).
inline SvgSeries svg_circle(const Vector& center, double radius,
                            const std::string& label,
                            const std::string& color = "#888888") {
  SvgSeries s;
  s.label = label;
  s.color = color;
  for (int i = 0; i <= 256; ++i) {
    const double a = 2.0 * 3.14159265358979323846 * i / 256.0;
    s.points.emplace_back(center(0) + radius * std::cos(a),
                          center(1) + radius * std::sin(a));
  }
  return s;
}

}  // namespace dsde
