#pragma once

// Output formats of the command-line tool: CSV curve tables, SVG figures
// and atomic file emission. JSON goes through nlohmann::ordered_json.

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "sode/core.hpp"

namespace sode::cli {

/// 17 significant digits, shortest form that round-trips.
std::string fmt_double(double v);

/// Header `t,x1..xn,y1..yn`.
std::string csv_header(std::size_t n);
std::string csv_row(double t, const Vec& x, const Vec& y);

struct Polyline {
  std::vector<std::pair<double, double>> points;
  bool dark = true;  // geodesics dark, a-curves light
};

/// Fixed 800 x 800 canvas, equal axis scaling, y axis pointing up.
std::string svg_figure(const std::vector<Polyline>& lines, const std::string& title);

/// Writes to `path` via a sibling temporary file and rename; "-" means `out`.
void emit(const std::string& path, const std::string& content, std::ostream& out);

}  // namespace sode::cli
