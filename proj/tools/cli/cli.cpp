#include "cli.hpp"

#include <CLI11.hpp>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <json.hpp>
#include <sstream>

#include "sode/connection.hpp"
#include "sode/expmap.hpp"
#include "sode/finsler.hpp"
#include "sode/global.hpp"
#include "sode/scene.hpp"
#include "writers.hpp"

namespace sode::cli {

using json = nlohmann::ordered_json;

namespace {

// ---- argument parsing ---------------------------------------------------------

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, sep)) out.push_back(part);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double to_number(const std::string& raw, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  std::string s = raw;
  while (!s.empty() && s.front() == ' ') s.erase(s.begin());
  while (!s.empty() && s.back() == ' ') s.pop_back();
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size() || !std::isfinite(v))
    throw ValidationError(what + ": '" + raw + "' is not a finite number");
  return v;
}

Vec parse_vec(const std::string& s, std::size_t n, const std::string& what) {
  Vec v;
  for (const auto& p : split(s, ',')) v.push_back(to_number(p, what));
  if (v.size() != n)
    throw ValidationError(what + " has " + std::to_string(v.size()) + " components, the scene has dim " +
                          std::to_string(n));
  return v;
}

std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> v;
  for (const auto& p : split(s, ',')) v.push_back(to_number(p, what));
  return v;
}

/// "lo:hi" or "lo:hi:step".
std::vector<double> parse_range(const std::string& s, std::size_t parts, const std::string& what) {
  std::vector<double> v;
  for (const auto& p : split(s, ':')) v.push_back(to_number(p, what));
  if (v.size() != parts)
    throw ValidationError(what + " expects " + std::string(parts == 2 ? "lo:hi" : "lo:hi:step") + ", got '" + s + "'");
  if (!(v[0] < v[1])) throw ValidationError(what + " needs lo < hi");
  if (parts == 3 && !(v[2] > 0.0)) throw ValidationError(what + " needs a positive step");
  return v;
}

/// "a1,b1;a2,b2;..."
Box parse_box(const std::string& s, std::size_t n, const std::string& what) {
  std::vector<Interval> axes;
  for (const auto& ax : split(s, ';')) {
    const auto iv = split(ax, ',');
    if (iv.size() != 2) throw ValidationError(what + ": axis '" + ax + "' needs 'lo,hi'");
    const Interval i{to_number(iv[0], what), to_number(iv[1], what)};
    if (!(i.lo <= i.hi)) throw ValidationError(what + ": axis '" + ax + "' needs lo <= hi");
    axes.push_back(i);
  }
  if (axes.size() != n)
    throw ValidationError(what + " has " + std::to_string(axes.size()) + " axes, expected " + std::to_string(n));
  return Box(std::move(axes));
}

VectorFieldSpec parse_field(const std::string& s, std::size_t n, const std::string& what) {
  const auto comps = split(s, ';');
  if (comps.size() != n)
    throw ValidationError(what + " has " + std::to_string(comps.size()) + " components, expected " + std::to_string(n));
  return VectorFieldSpec::parse(comps);
}

std::vector<double> grid(double lo, double hi, double step) {
  std::vector<double> g = linspace_step(lo, hi, step);
  if (!g.empty() && std::abs(g.back() - hi) <= 1e-9 * step) g.back() = hi;
  return g;
}

// ---- JSON ---------------------------------------------------------------------

json jvec(const Vec& v) {
  json a = json::array();
  for (double d : v) a.push_back(d);
  return a;
}

json jbox(const Box& b) {
  json a = json::array();
  for (const auto& i : b.axes) a.push_back(json::array({i.lo, i.hi}));
  return a;
}

json jmat(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    a.push_back(r);
  }
  return a;
}

std::string verdict_name(HomogeneityVerdict v) {
  switch (v) {
    case HomogeneityVerdict::Homogeneous: return "homogeneous";
    case HomogeneityVerdict::ZeroField: return "zero-field";
    case HomogeneityVerdict::Inhomogeneous: return "inhomogeneous";
  }
  return "inhomogeneous";
}

json jhom(const HomogeneityReport& r, const char* prefix) {
  json j;
  j["verdict"] = verdict_name(r.verdict);
  j["label"] = r.label(prefix);
  j["degree"] = r.degree;
  j["kind"] = to_string(r.kind);
  j["max_residual"] = r.max_residual;
  j["samples"] = r.samples;
  return j;
}

json jshape(const ConnectionShapeReport& r) {
  json j;
  j["vertical"] = jhom(r.vertical, "vh");
  j["zero_preserving"] = r.zero_preserving ? json(*r.zero_preserving) : json("not applicable");
  j["strongly_nonlinear"] = r.strongly_nonlinear ? json(*r.strongly_nonlinear) : json("not applicable");
  j["linear"] = r.linear;
  j["symmetric"] = r.symmetric;
  j["zero_section_max"] = r.zero_section_max;
  j["zero_limit"] = r.zero_limit;
  return j;
}

json jbound(const IntervalBound& b) {
  return json{{"value", b.value}, {"tag", to_string(b.tag)}, {"cause", to_string(b.cause)}};
}

json jsampling(const ProbeSampling& s, std::size_t n) {
  json j;
  j["samples"] = std::min(s.samples, kMaxProbeSamples);
  j["seed"] = s.seed;
  j["horizon"] = s.horizon;
  j["y_box"] = jbox(s.y_box.value_or(Box::cube(n, -1.0, 1.0)));
  j["min_speed"] = s.min_speed;
  return j;
}

json jevidence(const EvidenceReport& r, std::size_t n, std::optional<bool> replayed) {
  json j;
  j["property"] = r.property;
  j["verdict"] = to_string(r.verdict);
  j["note"] = r.note;
  j["K"] = jbox(r.K);
  json ladder = json::array();
  for (const auto& b : r.ladder) ladder.push_back(jbox(b));
  j["ladder"] = ladder;
  j["ladder_counts"] = r.ladder_counts;
  j["sampling"] = jsampling(r.sampling, n);
  j["samples"] = r.samples;
  if (r.property == "pseudoconvexity") {
    j["segments"] = r.segments;
    j["k_prime"] = r.k_prime ? jbox(*r.k_prime) : json(nullptr);
  } else {
    j["candidates"] = r.candidates;
    j["blowup"] = r.blowup;
  }
  j["escaped"] = r.escaped;
  j["truncated"] = r.truncated;
  if (r.witness) {
    const Witness& w = *r.witness;
    j["witness"] = json{{"sample_index", w.sample_index}, {"x0", jvec(w.x0)}, {"y0", jvec(w.y0)},
                        {"t_lo", w.t_lo},         {"t_hi", w.t_hi},    {"box", jbox(w.box)}};
    j["replayed"] = replayed.value_or(false);
  } else {
    j["witness"] = nullptr;
  }
  return j;
}

json jscene(const Scene& s) {
  return json{{"name", s.name}, {"kind", to_string(s.kind)}, {"dim", s.dim}, {"digest", s.digest}};
}

// ---- command plumbing ---------------------------------------------------------

struct Common {
  std::string scene;
  std::string format;
  std::string output = "-";
  long long seed = -1;
  bool timing = false;
};

struct Context {
  const Common& common;
  Scene scene;
  std::uint64_t seed;
  std::ostream& out;
  std::ostream& err;
  std::vector<std::string> argv;
  std::chrono::steady_clock::time_point start;

  std::size_t n() const { return scene.dim; }

  void emit_json(const std::string& command, json results) const {
    json j;
    j["command"] = command;
    j["argv"] = argv;
    j["scene"] = jscene(scene);
    j["seed"] = seed;
    j["results"] = std::move(results);
    if (common.timing) j["wall_time_s"] = elapsed();
    emit(common.output, j.dump(2) + "\n", out);
  }
  void emit_text(const std::string& text) const {
    emit(common.output, text, out);
    if (common.timing) err << "wall time: " << fmt_double(elapsed()) << " s\n";
  }
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  SampleSpec sample_spec(const std::string& x_box, const std::string& y_box, std::size_t count) const {
    SampleSpec spec;
    if (!x_box.empty()) spec.x_box = parse_box(x_box, n(), "--x-box");
    else if (scene.chart) spec.x_box = scene.chart;
    if (!y_box.empty()) spec.y_box = parse_box(y_box, n(), "--y-box");
    spec.count = count;
    spec.seed = seed;
    return spec;
  }
};

void add_common(CLI::App* sc, Common& c, const std::string& default_format, const std::vector<std::string>& formats) {
  c.format = default_format;
  sc->add_option("--scene", c.scene, "Scene file")->required();
  sc->add_option("--out", c.format, "Output format")->check(CLI::IsMember(formats))->capture_default_str();
  sc->add_option("-o,--output", c.output, "Output path ('-' for stdout)")->capture_default_str();
  sc->add_option("--seed", c.seed, "Override the scene's seed")->check(CLI::NonNegativeNumber);
  sc->add_flag("--timing", c.timing, "Report wall time (JSON field or stderr)");
}

ConnectionMode parse_mode(const std::string& m) {
  return m == "euler" ? ConnectionMode::EulerNormalized : ConnectionMode::FcncVerbatim;
}

// ---- subcommands --------------------------------------------------------------

struct GeodesicArgs {
  std::string p, v, t;
};

void cmd_geodesic(const Context& c, const GeodesicArgs& a) {
  const SodeField s = c.scene.spray();
  const Vec p = parse_vec(a.p, c.n(), "--p"), v = parse_vec(a.v, c.n(), "--v");
  const auto r = parse_range(a.t, 3, "--t");
  const Trajectory tr = integrate(s, TangentPoint(p, v), r[0], r[1], c.scene.flow_options());
  if (tr.cause() != Termination::Reached)
    c.err << "sodekit: integration stopped at t = " << fmt_double(tr.t_max()) << " (" << to_string(tr.cause())
          << ")\n";
  std::vector<double> ts;
  for (double t : grid(r[0], r[1], r[2]))
    if (t <= tr.t_max()) ts.push_back(t);

  if (c.common.format == "csv") {
    std::string text = csv_header(c.n());
    for (double t : ts) {
      const CurveJet j = tr.jet(t);
      text += csv_row(t, j.x, j.v);
    }
    c.emit_text(text);
  } else if (c.common.format == "svg") {
    if (c.n() != 2) throw ValidationError("SVG output needs a 2-dimensional scene");
    Polyline line;
    for (double t : ts) {
      const Vec x = tr.position(t);
      line.points.emplace_back(x[0], x[1]);
    }
    c.emit_text(svg_figure({line}, "geodesic of " + c.scene.name));
  } else {
    json res;
    res["p"] = jvec(p);
    res["v"] = jvec(v);
    res["termination"] = to_string(tr.cause());
    res["t_end"] = tr.t_max();
    res["steps"] = tr.size() - 1;
    res["rejected_steps"] = tr.rejected_steps();
    res["geodesic_residual"] = tr.size() > 1 ? geodesic_residual(s, tr, interior_times(tr, 100)) : 0.0;
    json pts = json::array();
    for (double t : ts) {
      const CurveJet j = tr.jet(t);
      pts.push_back(json{{"t", t}, {"x", jvec(j.x)}, {"y", jvec(j.v)}});
    }
    res["points"] = pts;
    c.emit_json("geodesic", res);
  }
}

struct ExpmapArgs {
  std::string p, v;
  double eps = 1.0;
  double horizon = 50.0;
  bool jacobian = false;
  double h = 0.0;
};

void cmd_expmap(const Context& c, const ExpmapArgs& a) {
  const SodeField s = c.scene.spray();
  const FlowOptions o = c.scene.flow_options();
  const Vec p = parse_vec(a.p, c.n(), "--p"), v = parse_vec(a.v, c.n(), "--v");
  json res;
  res["p"] = jvec(p);
  res["v"] = jvec(v);
  res["eps"] = a.eps;
  const ExpDomainEstimate dom = eps_domain(s, p, v, a.horizon, o);
  res["eps_domain"] = json{{"lower", jbound(dom.interval.lower)},
                           {"upper", jbound(dom.interval.upper)},
                           {"convention_point", dom.convention_point},
                           {"contains_eps", dom.contains(a.eps)}};
  res["point"] = jvec(exp_map(s, p, v, a.eps, o));
  if (a.jacobian) {
    const ExpJacobian J = exp_jacobian(s, p, v, a.eps, a.h, o);
    res["jacobian"] = json{{"matrix", jmat(J.matrix)},
                           {"determinant", J.determinant},
                           {"condition", J.condition},
                           {"step", J.step}};
  }
  c.emit_json("expmap", res);
}

struct PlumeArgs {
  std::string p, eps = "0:3", a = "0.05:1:0.05", directions, a_curve_eps;
  double eps_step = 0.05;
};

void cmd_plume(const Context& c, const PlumeArgs& a) {
  const SodeField s = c.scene.spray();
  const Vec p = parse_vec(a.p, c.n(), "--p");
  PlumeSpec spec = PlumeSpec::figure_defaults(c.n());
  spec.flow.chart = c.scene.chart;
  spec.flow.blowup = c.scene.options.blowup;
  const auto er = parse_range(a.eps, 2, "--eps");
  if (!(a.eps_step > 0.0)) throw ValidationError("--eps-step must be positive");
  // Open interval lo < eps < hi.
  spec.eps_grid.clear();
  for (std::size_t i = 1;; ++i) {
    const double e = er[0] + static_cast<double>(i) * a.eps_step;
    if (e >= er[1] - 1e-9 * a.eps_step) break;
    spec.eps_grid.push_back(e);
  }
  const auto ar = parse_range(a.a, 3, "--a");
  spec.a_grid = grid(ar[0], ar[1], ar[2]);
  if (!a.directions.empty()) {
    spec.directions.clear();
    for (const auto& d : split(a.directions, ';')) spec.directions.push_back(parse_vec(d, c.n(), "--directions"));
  }
  if (!a.a_curve_eps.empty()) spec.a_curve_eps = parse_list(a.a_curve_eps, "--a-curve-eps");
  const PlumeData d = plume(s, p, spec);

  if (c.common.format == "csv") {
    std::string text = "curve,direction,a,eps";
    for (std::size_t i = 1; i <= c.n(); ++i) text += ",x" + std::to_string(i);
    text += "\n";
    auto row = [&](const char* kind, std::size_t dir, double av, double ev, const Vec& x) {
      text += std::string(kind) + "," + std::to_string(dir) + "," + fmt_double(av) + "," + fmt_double(ev);
      for (double q : x) text += "," + fmt_double(q);
      text += "\n";
    };
    for (const auto& g : d.geodesics)
      for (std::size_t k = 0; k < g.points.size(); ++k)
        if (g.points[k]) row("geodesic", g.direction, g.a, spec.eps_grid[k], *g.points[k]);
    for (const auto& ac : d.a_curves)
      for (std::size_t k = 0; k < ac.points.size(); ++k)
        if (ac.points[k]) row("a-curve", ac.direction, spec.a_grid[k], ac.eps, *ac.points[k]);
    c.emit_text(text);
  } else if (c.common.format == "svg") {
    if (c.n() != 2) throw ValidationError("SVG output needs a 2-dimensional scene");
    std::vector<Polyline> lines;
    for (const auto& g : d.geodesics) {
      Polyline l;
      l.points.emplace_back(p[0], p[1]);
      for (const auto& q : g.points)
        if (q) l.points.emplace_back((*q)[0], (*q)[1]);
      lines.push_back(std::move(l));
    }
    for (const auto& ac : d.a_curves) {
      Polyline l;
      l.dark = false;
      for (const auto& q : ac.points)
        if (q) l.points.emplace_back((*q)[0], (*q)[1]);
      lines.push_back(std::move(l));
    }
    c.emit_text(svg_figure(lines, "plume of " + c.scene.name));
  } else {
    json res;
    res["p"] = jvec(p);
    json dirs = json::array();
    for (const auto& v : spec.directions) dirs.push_back(jvec(v));
    res["directions"] = dirs;
    res["a_grid"] = spec.a_grid;
    res["eps_grid"] = spec.eps_grid;
    res["a_curve_eps"] = spec.a_curve_eps;
    res["consistency"] = d.consistency;
    res["consistency_nodes"] = d.consistency_nodes;
    auto pts = [](const std::vector<std::optional<Vec>>& v) {
      json a = json::array();
      for (const auto& q : v) a.push_back(q ? jvec(*q) : json(nullptr));
      return a;
    };
    json gs = json::array();
    for (const auto& g : d.geodesics)
      gs.push_back(json{{"direction", g.direction}, {"a", g.a}, {"points", pts(g.points)}, {"error", g.error}});
    res["geodesics"] = gs;
    json as = json::array();
    for (const auto& ac : d.a_curves)
      as.push_back(json{{"direction", ac.direction}, {"eps", ac.eps}, {"points", pts(ac.points)}, {"errors", ac.errors}});
    res["a_curves"] = as;
    c.emit_json("plume", res);
  }
}

struct ClassifyArgs {
  std::string x_box, y_box;
  std::size_t samples = 64;
};

json classification(const Context& c, const ClassifyArgs& a) {
  const SampleSpec spec = c.sample_spec(a.x_box, a.y_box, a.samples);
  json res;
  res["sampling"] = json{{"x_box", jbox(spec.x_box.value_or(Box::cube(c.n(), -1, 1)))},
                         {"y_box", jbox(spec.y_box.value_or(Box::cube(c.n(), -1, 1)))},
                         {"count", spec.count},
                         {"seed", spec.seed}};
  res["domain"] = to_string(c.scene.domain);
  res["spray"] = jhom(classify_homogeneity(c.scene.spray(), spec), "h");
  if (c.scene.connection) res["connection"] = jshape(classify_connection_shape(*c.scene.connection, spec));
  if (c.scene.finsler) {
    const H2Check h2 = c.scene.finsler->check_h2(spec);
    res["basic_function_h2"] = json{{"ok", h2.ok}, {"max_residual", h2.max_residual}, {"samples", h2.samples}};
    res["connection"] = jshape(classify_connection_shape(finsler_connection(*c.scene.finsler), spec));
    // Labels customarily attached to these objects, next to the measured ones.
    res["customary_labels"] = json{{"spray", "h(1)"}, {"connection", "vh(0)"}};
  }
  return res;
}

void cmd_classify(const Context& c, const ClassifyArgs& a) { c.emit_json("classify", classification(c, a)); }

struct ConnectionArgs {
  std::string x, y, mode = "fcnc", U, V, x_box, y_box;
  std::size_t samples = 64;
};

void cmd_connection(const Context& c, const ConnectionArgs& a) {
  const SampleSpec spec = c.sample_spec(a.x_box, a.y_box, a.samples);
  const SodeField s = c.scene.spray();
  const Vec x = parse_vec(a.x, c.n(), "--x"), y = parse_vec(a.y, c.n(), "--y");
  const ConnectionField conn = c.scene.connection ? *c.scene.connection
                                                  : connection_from_spray(s, parse_mode(a.mode), spec);
  json res;
  res["source"] = c.scene.connection ? "scene" : to_string(parse_mode(a.mode));
  res["x"] = jvec(x);
  res["y"] = jvec(y);
  res["coefficients"] = jmat(conn(x, y));
  const CompatibilityReport cr = compatibility(conn, s, spec);
  res["compatibility"] = json{{"compatible", cr.compatible}, {"residual", cr.residual}, {"samples", cr.samples}};
  res["shape"] = jshape(classify_connection_shape(conn, spec));
  try {
    const ConnectionField lc = lc_reference(conn, spec);
    json t = json::array();
    for (std::size_t i = 0; i < c.n(); ++i)
      for (std::size_t j = 0; j < c.n(); ++j) {
        Vec ei(c.n(), 0.0), ej(c.n(), 0.0);
        ei[i] = ej[j] = 1.0;
        t.push_back(json{{"i", i + 1}, {"j", j + 1}, {"value", jvec(torsion(conn, lc, ei, ej, x))}});
      }
    res["torsion"] = t;
  } catch (const InhomogeneousSprayError& e) {
    res["torsion"] = json{{"error", e.what()}};
  }
  json curv = json::array();
  std::vector<VectorFieldSpec> basis;
  for (std::size_t i = 0; i < c.n(); ++i) {
    Vec e(c.n(), 0.0);
    e[i] = 1.0;
    basis.push_back(VectorFieldSpec::constant(e));
  }
  for (std::size_t i = 0; i < c.n(); ++i)
    for (std::size_t j = i + 1; j < c.n(); ++j)
      curv.push_back(json{{"i", i + 1}, {"j", j + 1}, {"value", jvec(curvature_bracket(conn, basis[i], basis[j], y, x))}});
  res["curvature"] = curv;
  if (!a.U.empty() || !a.V.empty()) {
    if (a.U.empty() || a.V.empty()) throw ValidationError("--U and --V go together");
    const VectorFieldSpec U = parse_field(a.U, c.n(), "--U"), V = parse_field(a.V, c.n(), "--V");
    res["covariant_derivative"] = jvec(covariant_derivative(conn, U, V, x));
  }
  c.emit_json("connection", res);
}

struct FinslerArgs {
  std::string x, y, mode = "fcnc", convention = "negative";
  double tol = 1e-12;
};

void cmd_finsler(const Context& c, const FinslerArgs& a) {
  if (!c.scene.finsler) throw ValidationError("the finsler subcommand needs a scene with a [finsler] section");
  const FinslerStructure& f = *c.scene.finsler;
  const Vec x = parse_vec(a.x, c.n(), "--x"), y = parse_vec(a.y, c.n(), "--y");
  const auto conv =
      a.convention == "positive" ? SignatureConvention::PositiveTimelike : SignatureConvention::NegativeTimelike;
  json res;
  res["x"] = jvec(x);
  res["y"] = jvec(y);
  res["L"] = f.value(x, y);
  res["causal_type"] = to_string(causal_type(f, x, y, a.tol, conv));
  res["vertical_hessian"] = jmat(f.vertical_hessian(x, y));
  res["geodesic_coefficients"] = jvec(f.geodesic_coefficients(x, y));
  res["connection_mode"] = to_string(parse_mode(a.mode));
  res["connection"] = jmat(finsler_connection(f, parse_mode(a.mode))(x, y));
  const H2Check h2 = f.check_h2(c.sample_spec("", "", 64));
  res["basic_function_h2"] = json{{"ok", h2.ok}, {"max_residual", h2.max_residual}, {"samples", h2.samples}};
  c.emit_json("finsler", res);
}

struct ProbeArgs {
  std::string K, property = "both", y_box;
  std::size_t samples = kMaxProbeSamples;
  double horizon = 50.0, min_speed = 0.25;
};

ProbeSampling probe_sampling(const Context& c, std::size_t samples, double horizon, double min_speed,
                             const std::string& y_box) {
  ProbeSampling ps;
  ps.samples = samples;
  ps.seed = c.seed;
  ps.horizon = horizon;
  ps.min_speed = min_speed;
  if (!y_box.empty()) ps.y_box = parse_box(y_box, c.n(), "--y-box");
  return ps;
}

json run_probe(const Context& c, const SodeField& s, const Box& K, const ProbeSampling& ps, bool pseudo) {
  const FlowOptions o = c.scene.flow_options();
  const EvidenceReport r = pseudo ? probe_pseudoconvexity(s, K, ps, o) : probe_disprisonment(s, K, ps, o);
  std::optional<bool> replayed;
  if (r.witness) replayed = replay_witness(s, r, o);
  return jevidence(r, c.n(), replayed);
}

void cmd_probe(const Context& c, const ProbeArgs& a) {
  const SodeField s = c.scene.spray();
  const Box K = parse_box(a.K, c.n(), "--K");
  const ProbeSampling ps = probe_sampling(c, a.samples, a.horizon, a.min_speed, a.y_box);
  json res;
  if (a.property != "disprisonment") res["pseudoconvexity"] = run_probe(c, s, K, ps, true);
  if (a.property != "pseudoconvexity") res["disprisonment"] = run_probe(c, s, K, ps, false);
  c.emit_json("probe", res);
}

struct ConnectArgs {
  std::string p, q, v0;
  double eps = 1.0, tol = 1e-8;
  std::size_t max_iter = 20;
};

void cmd_connect(const Context& c, const ConnectArgs& a) {
  const SodeField s = c.scene.spray();
  const Vec p = parse_vec(a.p, c.n(), "--p"), q = parse_vec(a.q, c.n(), "--q");
  if (a.eps == 0.0) throw ValidationError("--eps must be nonzero");
  Vec v0(c.n());
  if (a.v0.empty()) {
    for (std::size_t i = 0; i < c.n(); ++i) v0[i] = (q[i] - p[i]) / a.eps;
  } else {
    v0 = parse_vec(a.v0, c.n(), "--v0");
  }
  ShootingOptions so;
  so.max_iter = a.max_iter;
  so.tol = a.tol;
  so.flow.chart = c.scene.chart;
  so.flow.blowup = c.scene.options.blowup;
  const ShootingResult r = connect_geodesically(s, p, q, a.eps, v0, so);
  const Trajectory tr = integrate(s, TangentPoint(p, r.v), 0.0, a.eps, so.flow);
  json res;
  res["p"] = jvec(p);
  res["q"] = jvec(q);
  res["eps"] = a.eps;
  res["v0"] = jvec(v0);
  res["v"] = jvec(r.v);
  res["residual"] = r.residual;
  res["iterations"] = r.iterations;
  res["history"] = r.history;
  res["endpoint"] = jvec(tr.position(a.eps));
  res["geodesic_residual"] = tr.size() > 1 ? geodesic_residual(s, tr, interior_times(tr, 100)) : 0.0;
  c.emit_json("connect", res);
}

struct PerturbArgs {
  std::string center_x, center_y, radius_x, radius_y, amplitude, K, sweep, y_box;
  double delta = 0.0, horizon = 50.0, min_speed = 0.25;
  std::size_t samples = 500, iterations = 4;
};

void cmd_perturb(const Context& c, const PerturbArgs& a) {
  const SodeField s = c.scene.spray();
  const std::size_t n = c.n();
  BumpSpec b;
  b.center_x = parse_vec(a.center_x, n, "--center-x");
  b.center_y = parse_vec(a.center_y, n, "--center-y");
  b.radius_x = parse_vec(a.radius_x, n, "--radius-x");
  b.radius_y = parse_vec(a.radius_y, n, "--radius-y");
  b.amplitude = parse_vec(a.amplitude, n, "--amplitude");
  b.validate();
  if (a.delta > 0.0) b = b.scaled_to(a.delta);
  const SodeField f = perturb(s, b);
  const C0Distance d = c0_distance(s, f, b.support(), 9, 2000, c.seed);
  json res;
  res["bump"] = json{{"center_x", jvec(b.center_x)}, {"center_y", jvec(b.center_y)}, {"radius_x", jvec(b.radius_x)},
                     {"radius_y", jvec(b.radius_y)}, {"amplitude", jvec(b.amplitude)}, {"sup_norm", b.sup_norm()},
                     {"support", jbox(b.support())}};
  res["c0_distance"] = json{{"value", d.value}, {"samples", d.samples}, {"argmax", jvec(d.argmax)},
                            {"note", "sampled lower bound of the supremum over the support"}};
  if (!a.K.empty()) {
    const Box K = parse_box(a.K, n, "--K");
    const ProbeSampling ps = probe_sampling(c, a.samples, a.horizon, a.min_speed, a.y_box);
    res["pseudoconvexity"] = run_probe(c, f, K, ps, true);
    res["disprisonment"] = run_probe(c, f, K, ps, false);
    if (!a.sweep.empty()) {
      const auto r = parse_range(a.sweep, 2, "--sweep");
      const StabilitySweep sw = stability_sweep(s, b, K, r[0], r[1], a.iterations, ps, c.scene.flow_options());
      json ev = json::array();
      for (const auto& p : sw.evaluated)
        ev.push_back(json{{"delta", p.delta},
                          {"pseudoconvexity", to_string(p.pseudoconvexity)},
                          {"disprisonment", to_string(p.disprisonment)},
                          {"stable", p.stable()}});
      res["sweep"] = json{{"evaluated", ev},
                          {"transition_lo", sw.transition_lo ? json(*sw.transition_lo) : json(nullptr)},
                          {"transition_hi", sw.transition_hi ? json(*sw.transition_hi) : json(nullptr)}};
    }
  } else if (!a.sweep.empty()) {
    throw ValidationError("--sweep needs --K");
  }
  c.emit_json("perturb", res);
}

void cmd_report(const Context& c, const ClassifyArgs& a) {
  const Scene& s = c.scene;
  json sc;
  sc["name"] = s.name;
  sc["kind"] = to_string(s.kind);
  sc["dim"] = s.dim;
  sc["domain"] = to_string(s.domain);
  sc["chart"] = s.chart ? jbox(*s.chart) : json(nullptr);
  sc["options"] = json{{"atol", s.options.atol},
                       {"rtol", s.options.rtol},
                       {"blowup", s.options.blowup},
                       {"max_step", std::isfinite(s.options.max_step) ? json(s.options.max_step) : json(nullptr)},
                       {"seed", s.options.seed},
                       {"degree", s.options.degree ? json(*s.options.degree) : json(nullptr)}};
  json fields = json::array();
  auto exprs = [&](const std::vector<Expression>& v) {
    for (const auto& e : v) fields.push_back(e.str());
  };
  if (s.sode && s.sode->expressions()) exprs(*s.sode->expressions());
  if (s.connection && s.connection->expressions()) exprs(*s.connection->expressions());
  if (s.finsler) fields.push_back(s.finsler->basic_function().str());
  sc["expressions"] = fields;
  json res;
  res["scene"] = sc;
  res["classification"] = classification(c, a);
  c.emit_json("report", res);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  CLI::App app{"sodekit: second-order differential equations on tangent bundles", "sodekit"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  std::array<Common, 10> commons;
  GeodesicArgs geo;
  ExpmapArgs exm;
  PlumeArgs plu;
  ClassifyArgs cla;
  ConnectionArgs con;
  FinslerArgs fin;
  ProbeArgs pro;
  ConnectArgs cnt;
  PerturbArgs per;
  ClassifyArgs rep;

  auto* g = app.add_subcommand("geodesic", "Integrate one geodesic and sample it on a grid");
  add_common(g, commons[0], "csv", {"csv", "svg", "json"});
  g->add_option("--p", geo.p, "Base point, comma separated")->required();
  g->add_option("--v", geo.v, "Initial velocity")->required();
  g->add_option("--t", geo.t, "Parameter grid lo:hi:step (initial data at lo)")->required();

  auto* e = app.add_subcommand("expmap", "Evaluate exp^eps_p(v), its eps-domain and optionally its Jacobian");
  add_common(e, commons[1], "json", {"json"});
  e->add_option("--p", exm.p)->required();
  e->add_option("--v", exm.v)->required();
  e->add_option("--eps", exm.eps)->capture_default_str();
  e->add_option("--horizon", exm.horizon, "Search horizon for the eps-domain")->capture_default_str();
  e->add_flag("--jacobian", exm.jacobian);
  e->add_option("--step", exm.h, "Difference step in v (0 = automatic)")->capture_default_str();

  auto* pl = app.add_subcommand("plume", "Geodesics and a-curves from one base point");
  add_common(pl, commons[2], "svg", {"svg", "csv", "json"});
  pl->add_option("--p", plu.p)->required();
  pl->add_option("--eps", plu.eps, "Open eps interval lo:hi")->capture_default_str();
  pl->add_option("--eps-step", plu.eps_step)->capture_default_str();
  pl->add_option("--a", plu.a, "a grid lo:hi:step")->capture_default_str();
  pl->add_option("--directions", plu.directions, "Directions 'v1;v2;...' (default: three-ray fan)");
  pl->add_option("--a-curve-eps", plu.a_curve_eps, "eps values of the a-curves, comma separated");

  auto* cl = app.add_subcommand("classify", "Homogeneity and connection-shape classification");
  add_common(cl, commons[3], "json", {"json"});
  cl->add_option("--x-box", cla.x_box, "Base sampling box 'lo,hi;...' (default: chart or [-1,1]^n)");
  cl->add_option("--y-box", cla.y_box, "Fiber sampling box (default [-1,1]^n)");
  cl->add_option("--samples", cla.samples)->capture_default_str();

  auto* cn = app.add_subcommand("connection", "Connection coefficients, torsion and curvature at a point");
  add_common(cn, commons[4], "json", {"json"});
  cn->add_option("--x", con.x)->required();
  cn->add_option("--y", con.y)->required();
  cn->add_option("--mode", con.mode, "fcnc or euler (sode and finsler scenes)")
      ->check(CLI::IsMember({"fcnc", "euler"}))
      ->capture_default_str();
  cn->add_option("--U", con.U, "Vector field 'e1;e2;...' for nabla_U V");
  cn->add_option("--V", con.V, "Vector field 'e1;e2;...'");
  cn->add_option("--x-box", con.x_box);
  cn->add_option("--y-box", con.y_box);
  cn->add_option("--samples", con.samples)->capture_default_str();

  auto* fi = app.add_subcommand("finsler", "Basic-function quantities at a point");
  add_common(fi, commons[5], "json", {"json"});
  fi->add_option("--x", fin.x)->required();
  fi->add_option("--y", fin.y)->required();
  fi->add_option("--mode", fin.mode)->check(CLI::IsMember({"fcnc", "euler"}))->capture_default_str();
  fi->add_option("--convention", fin.convention, "Sign of L called timelike")
      ->check(CLI::IsMember({"negative", "positive"}))
      ->capture_default_str();
  fi->add_option("--tol", fin.tol, "Null tolerance")->capture_default_str();

  auto* pr = app.add_subcommand("probe", "Pseudoconvexity and disprisonment evidence");
  add_common(pr, commons[6], "json", {"json"});
  pr->add_option("--K", pro.K, "Compact box 'lo,hi;...'")->required();
  pr->add_option("--property", pro.property)
      ->check(CLI::IsMember({"both", "pseudoconvexity", "disprisonment"}))
      ->capture_default_str();
  pr->add_option("--samples", pro.samples)->capture_default_str();
  pr->add_option("--horizon", pro.horizon)->capture_default_str();
  pr->add_option("--y-box", pro.y_box, "Fiber sampling box (default [-1,1]^n)");
  pr->add_option("--min-speed", pro.min_speed)->capture_default_str();

  auto* ct = app.add_subcommand("connect", "Geodesic shooting from p to q");
  add_common(ct, commons[7], "json", {"json"});
  ct->add_option("--p", cnt.p)->required();
  ct->add_option("--q", cnt.q)->required();
  ct->add_option("--eps", cnt.eps)->capture_default_str();
  ct->add_option("--v0", cnt.v0, "Initial guess (default (q - p)/eps)");
  ct->add_option("--tol", cnt.tol)->capture_default_str();
  ct->add_option("--max-iter", cnt.max_iter)->capture_default_str();

  auto* pt = app.add_subcommand("perturb", "Bump perturbation, C0 distance and stability probes");
  add_common(pt, commons[8], "json", {"json"});
  pt->add_option("--center-x", per.center_x)->required();
  pt->add_option("--center-y", per.center_y)->required();
  pt->add_option("--radius-x", per.radius_x)->required();
  pt->add_option("--radius-y", per.radius_y)->required();
  pt->add_option("--amplitude", per.amplitude)->required();
  pt->add_option("--delta", per.delta, "Rescale the bump to this sup norm");
  pt->add_option("--K", per.K, "Probe box; probes are skipped without it");
  pt->add_option("--samples", per.samples)->capture_default_str();
  pt->add_option("--horizon", per.horizon)->capture_default_str();
  pt->add_option("--y-box", per.y_box);
  pt->add_option("--min-speed", per.min_speed)->capture_default_str();
  pt->add_option("--sweep", per.sweep, "Bisect the stability transition over delta in lo:hi");
  pt->add_option("--iterations", per.iterations)->capture_default_str();

  auto* rp = app.add_subcommand("report", "Scene summary with its classification");
  add_common(rp, commons[9], "json", {"json"});
  rp->add_option("--x-box", rep.x_box);
  rp->add_option("--y-box", rep.y_box);
  rp->add_option("--samples", rep.samples)->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    const auto subs = app.get_subcommands();
    err << "sodekit: " << ex.what() << "\n" << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  const std::array<CLI::App*, 10> subs{g, e, pl, cl, cn, fi, pr, ct, pt, rp};
  std::size_t which = 0;
  while (which + 1 < subs.size() && !*subs[which]) ++which;
  const Common& common = commons[which];
  try {
    const Scene scene = load_scene(common.scene);
    const std::uint64_t seed = common.seed >= 0 ? static_cast<std::uint64_t>(common.seed) : scene.options.seed;
    const Context ctx{common, scene, seed, out, err, args, start};
    if (*g) cmd_geodesic(ctx, geo);
    else if (*e) cmd_expmap(ctx, exm);
    else if (*pl) cmd_plume(ctx, plu);
    else if (*cl) cmd_classify(ctx, cla);
    else if (*cn) cmd_connection(ctx, con);
    else if (*fi) cmd_finsler(ctx, fin);
    else if (*pr) cmd_probe(ctx, pro);
    else if (*ct) cmd_connect(ctx, cnt);
    else if (*pt) cmd_perturb(ctx, per);
    else if (*rp) cmd_report(ctx, rep);
    return kExitOk;
  } catch (const NumericalError& ex) {
    err << "sodekit: numerical failure: " << ex.what() << "\n";
    return kExitNumerical;
  } catch (const Error& ex) {
    err << "sodekit: " << ex.what() << "\n";
    return kExitInput;
  } catch (const std::filesystem::filesystem_error& ex) {
    err << "sodekit: " << ex.what() << "\n";
    return kExitInput;
  } catch (const std::exception& ex) {
    err << "sodekit: internal error: " << ex.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace sode::cli
