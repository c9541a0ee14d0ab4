#pragma once

// Minimal SVG line charts with error bars for shot-count sweeps.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "am3/csv.hpp"
#include "am3/errors.hpp"

namespace am3::plot {

enum class Kind { AccuracyVsShots, LambdaVsShots };

inline Kind parse_kind(std::string_view s) {
  if (s == "accuracy-vs-shots") return Kind::AccuracyVsShots;
  if (s == "lambda-vs-shots") return Kind::LambdaVsShots;
  throw UsageError("unknown plot kind '" + std::string(s) + "' (valid: accuracy-vs-shots, lambda-vs-shots)");
}

struct Point {
  double x, y, err;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// Renders the table as an SVG document. Rows are grouped into one line per
/// value of the optional `mode` column and sorted by k_shot.
inline std::string render_svg(const csv::Table& table, Kind kind) {
  const char* y_name = kind == Kind::AccuracyVsShots ? "mean_accuracy" : "lambda_mean";
  const char* e_name = kind == Kind::AccuracyVsShots ? "ci95" : "lambda_std";
  const auto xc = table.column("k_shot");
  const auto yc = table.column(y_name);
  const auto ec = table.column(e_name);
  if (table.rows.empty()) throw DataError("CSV has no data rows");
  const bool grouped = table.has_column("mode");

  std::map<std::string, std::vector<Point>> series;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string key = grouped ? table.rows[r][table.column("mode")] : std::string(y_name);
    series[key].push_back({table.number(r, xc), table.number(r, yc), std::abs(table.number(r, ec))});
  }
  double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
  for (auto& [_, pts] : series) {
    std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.x < b.x; });
    for (const auto& p : pts) {
      x_min = std::min(x_min, p.x);
      x_max = std::max(x_max, p.x);
      y_min = std::min(y_min, p.y - p.err);
      y_max = std::max(y_max, p.y + p.err);
    }
  }
  if (x_max == x_min) {
    x_min -= 1;
    x_max += 1;
  }
  if (y_max == y_min) {
    y_min -= 0.05;
    y_max += 0.05;
  }

  constexpr double width = 640, height = 420, left = 70, right = 20, top = 30, bottom = 60;
  auto sx = [&](double x) { return left + (x - x_min) / (x_max - x_min) * (width - left - right); };
  auto sy = [&](double y) { return height - bottom - (y - y_min) / (y_max - y_min) * (height - top - bottom); };
  static constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << height - bottom << "\" x2=\"" << width - right << "\" y2=\""
      << height - bottom << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << height - bottom
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = y_min + (y_max - y_min) * i / 4.0;
    svg << "<text x=\"" << left - 8 << "\" y=\"" << detail::fmt(sy(y) + 4) << "\" font-size=\"11\" text-anchor=\"end\">"
        << detail::fmt(y) << "</text>\n";
  }
  std::vector<double> xs;
  for (const auto& [_, pts] : series) {
    for (const auto& p : pts) xs.push_back(p.x);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  for (double x : xs) {
    svg << "<text x=\"" << detail::fmt(sx(x)) << "\" y=\"" << height - bottom + 18
        << "\" font-size=\"11\" text-anchor=\"middle\">" << detail::fmt(x) << "</text>\n";
  }
  svg << "<text x=\"" << (left + width - right) / 2 << "\" y=\"" << height - 15
      << "\" font-size=\"13\" text-anchor=\"middle\">shots (K)</text>\n"
      << "<text x=\"18\" y=\"" << (top + height - bottom) / 2 << "\" font-size=\"13\" text-anchor=\"middle\" "
      << "transform=\"rotate(-90 18 " << (top + height - bottom) / 2 << ")\">" << y_name << "</text>\n";

  std::size_t colour = 0;
  for (const auto& [name, pts] : series) {
    const char* stroke = palette[colour++ % std::size(palette)];
    svg << "<g stroke=\"" << stroke << "\" fill=\"" << stroke << "\">\n<polyline fill=\"none\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      svg << (i ? " " : "") << detail::fmt(sx(pts[i].x)) << ',' << detail::fmt(sy(pts[i].y));
    }
    svg << "\"/>\n";
    for (const auto& p : pts) {
      const auto x = detail::fmt(sx(p.x));
      svg << "<line x1=\"" << x << "\" y1=\"" << detail::fmt(sy(p.y - p.err)) << "\" x2=\"" << x << "\" y2=\""
          << detail::fmt(sy(p.y + p.err)) << "\"/>\n"
          << "<circle cx=\"" << x << "\" cy=\"" << detail::fmt(sy(p.y)) << "\" r=\"3\"/>\n";
    }
    svg << "<text x=\"" << width - right - 4 << "\" y=\"" << top + 14 * colour
        << "\" font-size=\"11\" text-anchor=\"end\" stroke=\"none\">" << detail::escape(name) << "</text>\n</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace am3::plot
