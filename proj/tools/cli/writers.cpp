#include "writers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sode::cli {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_header(std::size_t n) {
  std::string h = "t";
  for (std::size_t i = 1; i <= n; ++i) h += ",x" + std::to_string(i);
  for (std::size_t i = 1; i <= n; ++i) h += ",y" + std::to_string(i);
  return h + "\n";
}

std::string csv_row(double t, const Vec& x, const Vec& y) {
  std::string r = fmt_double(t);
  for (double v : x) r += "," + fmt_double(v);
  for (double v : y) r += "," + fmt_double(v);
  return r + "\n";
}

std::string svg_figure(const std::vector<Polyline>& lines, const std::string& title) {
  constexpr double size = 800.0, margin = 40.0;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& l : lines)
    for (const auto& [a, b] : l.points) {
      x0 = std::min(x0, a), x1 = std::max(x1, a);
      y0 = std::min(y0, b), y1 = std::max(y1, b);
    }
  if (!(x0 <= x1)) x0 = y0 = -1.0, x1 = y1 = 1.0;
  const double span = std::max({x1 - x0, y1 - y0, 1e-12});
  const double scale = (size - 2 * margin) / span;
  const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
  auto px = [&](double a) { return size / 2 + (a - cx) * scale; };
  auto py = [&](double b) { return size / 2 - (b - cy) * scale; };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"800\" viewBox=\"0 0 800 800\">\n"
     << "<title>" << title << "</title>\n"
     << "<rect width=\"800\" height=\"800\" fill=\"white\"/>\n";
  char buf[64];
  // Light curves first so the dark ones stay on top.
  for (bool dark : {false, true}) {
    os << "<g fill=\"none\" stroke=\"" << (dark ? "#000000" : "#999999") << "\" stroke-width=\""
       << (dark ? "1.2" : "0.8") << "\" class=\"" << (dark ? "geodesics" : "a-curves") << "\">\n";
    for (const auto& l : lines) {
      if (l.dark != dark || l.points.size() < 2) continue;
      os << "<polyline points=\"";
      for (std::size_t i = 0; i < l.points.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s%.3f,%.3f", i ? " " : "", px(l.points[i].first), py(l.points[i].second));
        os << buf;
      }
      os << "\"/>\n";
    }
    os << "</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void emit(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << content;
    out.flush();
    return;
  }
  const std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError("cannot write '" + tmp.string() + "'");
    f << content;
    f.close();
    if (!f) throw ValidationError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw ValidationError("cannot move output into place at '" + path + "': " + ec.message());
  }
}

}  // namespace sode::cli
