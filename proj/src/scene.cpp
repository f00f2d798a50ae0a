#include "sode/scene.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace sode {

std::string to_string(SceneKind k) {
  switch (k) {
    case SceneKind::Sode: return "sode";
    case SceneKind::Connection: return "connection";
    case SceneKind::Finsler: return "finsler";
  }
  return "sode";
}

SodeField Scene::spray() const {
  std::optional<SodeField> s;
  if (sode) s = *sode;
  else if (connection) s = spray_from_connection(*connection);
  else if (finsler) s = finsler_semispray(*finsler);
  else throw ValidationError("scene has no field");
  if (options.degree) s->declared_degree = options.degree;
  return *s;
}

FlowOptions Scene::flow_options() const {
  FlowOptions o = FlowOptions::with_tolerances(options.atol, options.rtol);
  o.blowup = options.blowup;
  o.max_step = options.max_step;
  o.chart = chart;
  return o;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

// Drops a trailing '#' comment that is not inside double quotes.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::string fnv1a(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct Entry {
  std::string value;
  std::size_t line;
};

class Parser {
 public:
  explicit Parser(std::string origin) : origin_(std::move(origin)) {}

  [[noreturn]] void fail(std::size_t line, const std::string& msg) const {
    throw SceneError(origin_ + ":" + std::to_string(line) + ": " + msg, line);
  }

  double number(const Entry& e, const std::string& key) const {
    const std::string v = unquote(e, key, false);
    double d = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
    if (ec != std::errc() || ptr != v.data() + v.size()) fail(e.line, "'" + key + "' expects a number, got '" + v + "'");
    return d;
  }

  std::string unquote(const Entry& e, const std::string& key, bool required) const {
    const std::string& v = e.value;
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
    if (required) fail(e.line, "'" + key + "' expects a double-quoted expression");
    if (v.find('"') != std::string::npos) fail(e.line, "unbalanced quotes in '" + key + "'");
    return v;
  }

  Box box(const Entry& e, std::size_t dim) const {
    const std::string v = unquote(e, "chart", false);
    if (v.rfind("box(", 0) != 0 || v.back() != ')') fail(e.line, "chart must be box(a1, b1; ...; an, bn)");
    std::vector<Interval> axes;
    std::stringstream body(v.substr(4, v.size() - 5));
    std::string part;
    while (std::getline(body, part, ';')) {
      const auto comma = part.find(',');
      if (comma == std::string::npos) fail(e.line, "chart axis '" + trim(part) + "' needs 'lo, hi'");
      const Entry lo{trim(part.substr(0, comma)), e.line}, hi{trim(part.substr(comma + 1)), e.line};
      const Interval iv{number(lo, "chart"), number(hi, "chart")};
      if (!(iv.lo < iv.hi)) fail(e.line, "chart axis " + std::to_string(axes.size() + 1) + " needs lo < hi");
      axes.push_back(iv);
    }
    if (axes.size() != dim)
      fail(e.line, "dimension mismatch: chart has " + std::to_string(axes.size()) + " axes but dim = " +
                       std::to_string(dim));
    return Box(std::move(axes));
  }

  Expression expression(const Entry& e, const std::string& key, std::size_t dim) const {
    const std::string text = unquote(e, key, true);
    try {
      return Expression::parse(text, dim);
    } catch (const ValidationError& err) {
      fail(e.line, key + ": " + err.what());
    }
  }

 private:
  std::string origin_;
};

}  // namespace

Scene parse_scene(std::string_view text, std::string_view origin) {
  const Parser P{std::string(origin)};
  using Section = std::map<std::string, Entry>;
  std::map<std::string, Section> sections;
  std::map<std::string, std::size_t> section_line;
  static const char* const known[] = {"scene", "sode", "connection", "finsler", "options"};

  std::string current;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') P.fail(lineno, "unterminated section header '" + line + "'");
      current = trim(std::string_view(line).substr(1, line.size() - 2));
      if (std::find(std::begin(known), std::end(known), current) == std::end(known))
        P.fail(lineno, "unknown section [" + current + "]");
      if (sections.count(current)) P.fail(lineno, "duplicate section [" + current + "]");
      sections[current];
      section_line[current] = lineno;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) P.fail(lineno, "expected 'key = value', got '" + line + "'");
    if (current.empty()) P.fail(lineno, "key outside of any section");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty() || value.empty()) P.fail(lineno, "expected 'key = value', got '" + line + "'");
    auto& sec = sections[current];
    if (sec.count(key)) P.fail(lineno, "duplicate key '" + key + "'");
    sec[key] = Entry{value, lineno};
  }

  if (!sections.count("scene")) P.fail(0, "missing section [scene]");
  const Section& head = sections["scene"];
  Scene s;
  s.digest = fnv1a(text);

  std::vector<std::string> fields;
  for (const char* k : {"sode", "connection", "finsler"})
    if (sections.count(k)) fields.push_back(k);
  if (fields.empty()) P.fail(0, "missing field section: one of [sode], [connection], [finsler]");
  if (fields.size() > 1)
    P.fail(section_line[fields[1]], "a scene holds exactly one field, found [" + fields[0] + "] and [" + fields[1] + "]");
  const std::string& fname = fields.front();
  s.kind = fname == "sode" ? SceneKind::Sode : fname == "connection" ? SceneKind::Connection : SceneKind::Finsler;

  for (const auto& [key, e] : head) {
    if (key == "dim") {
      const double d = P.number(e, key);
      if (!(d >= 1.0) || d != std::floor(d) || d > 64) P.fail(e.line, "dim must be a positive integer");
      s.dim = static_cast<std::size_t>(d);
    } else if (key == "kind") {
      const std::string k = P.unquote(e, key, false);
      if (k != fname) P.fail(e.line, "kind = " + k + " but the field section is [" + fname + "]");
    } else if (key == "exclude_zero_section") {
      const std::string b = P.unquote(e, key, false);
      if (b != "true" && b != "false") P.fail(e.line, "exclude_zero_section expects true or false");
    } else if (key == "name") {
      s.name = P.unquote(e, key, false);
    } else if (key != "chart") {
      P.fail(e.line, "unknown key '" + key + "' in [scene]");
    }
  }
  if (s.dim == 0) P.fail(section_line["scene"], "[scene] needs dim");
  if (auto it = head.find("chart"); it != head.end()) s.chart = P.box(it->second, s.dim);
  s.domain = s.kind == SceneKind::Finsler ? DomainKind::ZeroSectionExcluded : DomainKind::WholeBundle;
  if (auto it = head.find("exclude_zero_section"); it != head.end())
    s.domain = P.unquote(it->second, "", false) == "true" ? DomainKind::ZeroSectionExcluded : DomainKind::WholeBundle;

  // Field components; the index pattern is checked before the expression.
  const Section& body = sections[fname];
  auto index = [&](const std::string& digits, const Entry& e, const std::string& key) {
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return std::isdigit(c); }))
      P.fail(e.line, "unknown key '" + key + "' in [" + fname + "]");
    const std::size_t k = std::stoul(digits);
    if (k == 0 || k > s.dim)
      P.fail(e.line, "dimension mismatch: " + key + " is out of range for dim = " + std::to_string(s.dim));
    return k;
  };
  if (s.kind == SceneKind::Sode) {
    std::vector<std::optional<Expression>> comps(s.dim);
    for (const auto& [key, e] : body) {
      if (key.empty() || key[0] != 'S') P.fail(e.line, "unknown key '" + key + "' in [sode]");
      comps[index(key.substr(1), e, key) - 1] = P.expression(e, key, s.dim);
    }
    std::vector<Expression> ex;
    for (std::size_t k = 0; k < s.dim; ++k) {
      if (!comps[k]) P.fail(section_line["sode"], "[sode] is missing S" + std::to_string(k + 1));
      ex.push_back(*comps[k]);
    }
    s.sode.emplace(std::move(ex), s.domain);
  } else if (s.kind == SceneKind::Connection) {
    std::vector<Expression> ex(s.dim * s.dim, Expression::number(0.0));
    for (const auto& [key, e] : body) {
      const auto sep = key.find('_', 2);
      if (key.rfind("G_", 0) != 0 || sep == std::string::npos)
        P.fail(e.line, "unknown key '" + key + "' in [connection] (expected G_<k>_<i>)");
      const std::size_t k = index(key.substr(2, sep - 2), e, key), i = index(key.substr(sep + 1), e, key);
      ex[(k - 1) * s.dim + (i - 1)] = P.expression(e, key, s.dim);
    }
    s.connection.emplace(s.dim, std::move(ex), s.domain);
  } else {
    for (const auto& [key, e] : body)
      if (key != "L") P.fail(e.line, "unknown key '" + key + "' in [finsler]");
    const auto it = body.find("L");
    if (it == body.end()) P.fail(section_line["finsler"], "[finsler] needs L");
    s.finsler.emplace(P.expression(it->second, "L", s.dim), s.dim, s.domain);
  }

  if (sections.count("options")) {
    for (const auto& [key, e] : sections["options"]) {
      const double v = P.number(e, key);
      if (key == "atol" || key == "rtol" || key == "blowup" || key == "max_step") {
        if (!(v > 0.0)) P.fail(e.line, key + " must be positive");
        (key == "atol" ? s.options.atol : key == "rtol" ? s.options.rtol : key == "blowup" ? s.options.blowup
                                                                                           : s.options.max_step) = v;
      } else if (key == "seed") {
        if (!(v >= 0.0) || v != std::floor(v) || v > 9.007199254740992e15) P.fail(e.line, "seed must be a non-negative integer");
        s.options.seed = static_cast<std::uint64_t>(v);
      } else if (key == "degree") {
        s.options.degree = v;
      } else {
        P.fail(e.line, "unknown key '" + key + "' in [options]");
      }
    }
  }
  if (s.name.empty()) s.name = std::string(origin);
  return s;
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open scene file '" + path.string() + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  Scene s = parse_scene(buf.str(), path.filename().string());
  return s;
}

}  // namespace sode
