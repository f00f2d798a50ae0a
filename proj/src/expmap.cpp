#include "sode/expmap.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "sode/parallel.hpp"

namespace sode {

namespace {

void require_point(const SodeField& s, std::span<const double> p, std::span<const double> v) {
  if (p.size() != s.dim() || v.size() != s.dim())
    throw ValidationError("exp map: p and v must have dimension " + std::to_string(s.dim()));
}

Vec to_vec(std::span<const double> a) { return Vec(a.begin(), a.end()); }

Vec scaled(std::span<const double> v, double a) {
  Vec out(v.begin(), v.end());
  for (double& c : out) c *= a;
  return out;
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

}  // namespace

bool is_convention_point(const SodeField& s, std::span<const double> v) {
  return s.excludes_zero_section() && std::all_of(v.begin(), v.end(), [](double c) { return c == 0.0; });
}

Vec exp_map(const SodeField& s, std::span<const double> p, std::span<const double> v, double eps,
            const FlowOptions& opt) {
  require_point(s, p, v);
  if (eps == 0.0 || is_convention_point(s, v)) return to_vec(p);
  const Trajectory tr = integrate(s, TangentPoint(to_vec(p), to_vec(v)), 0.0, eps, opt);
  if (tr.cause() != Termination::Reached) {
    IntervalBound b;
    b.cause = tr.cause();
    b.value = tr.t_end();
    b.tag = tr.cause() == Termination::BlowUp ? BoundTag::VerifiedFinite : BoundTag::Truncated;
    throw EpsOutsideDomain("eps = " + fmt(eps) + " lies outside the geodesic's domain: integration stopped (" +
                               to_string(tr.cause()) + ") at parameter " + fmt(tr.t_end()),
                           b);
  }
  return tr.final_state().x;
}

bool ExpDomainEstimate::contains(double eps) const noexcept {
  if (eps == 0.0 || convention_point) return true;
  auto inside = [](const IntervalBound& b, double e) {
    return b.tag == BoundTag::ExceededHorizon ? std::abs(e) <= std::abs(b.value) : std::abs(e) < std::abs(b.value);
  };
  return eps > 0.0 ? inside(interval.upper, eps) : inside(interval.lower, eps);
}

ExpDomainEstimate eps_domain(const SodeField& s, std::span<const double> p, std::span<const double> v,
                             double horizon, const FlowOptions& opt) {
  require_point(s, p, v);
  ExpDomainEstimate d;
  d.p = to_vec(p);
  d.v = to_vec(v);
  if (is_convention_point(s, v)) {
    d.convention_point = true;
    d.interval.lower = {-horizon, BoundTag::ExceededHorizon, Termination::Reached};
    d.interval.upper = {horizon, BoundTag::ExceededHorizon, Termination::Reached};
    return d;
  }
  d.interval = maximal_interval(s, TangentPoint(d.p, d.v), horizon, opt);
  return d;
}

namespace {

// Base geodesic together with the difference quotients D_k = (x_k - x_0) / d_k
// of neighbouring geodesics with initial velocity v + d_k w_k, written as one
// SODE: D_k'' = (S(x_0 + d_k D_k, y_0 + d_k D_k') - S(x_0, y_0)) / d_k. Step
// control then sees the quotients at unit scale.
class StencilModel final : public FieldModelImpl<StencilModel> {
 public:
  StencilModel(std::shared_ptr<const FieldModel> base, std::vector<double> deltas)
      : base_(std::move(base)), deltas_(std::move(deltas)) {}
  std::size_t dim() const override { return base_->dim() * (1 + deltas_.size()); }
  std::size_t outputs() const override { return dim(); }

  template <typename T>
  void evaluate(std::span<const T> x, std::span<const T> y, std::span<T> out) const {
    const std::size_t n = base_->dim();
    base_->eval(x.first(n), y.first(n), out.first(n));
    std::vector<T> xs(n), ys(n), sk(n);
    for (std::size_t k = 0; k < deltas_.size(); ++k) {
      const std::size_t off = n * (k + 1);
      const double d = deltas_[k];
      for (std::size_t i = 0; i < n; ++i) {
        xs[i] = x[i] + d * x[off + i];
        ys[i] = y[i] + d * y[off + i];
      }
      base_->eval(std::span<const T>(xs), std::span<const T>(ys), std::span<T>(sk));
      for (std::size_t i = 0; i < n; ++i) out[off + i] = (sk[i] - out[i]) / d;
    }
  }

 private:
  std::shared_ptr<const FieldModel> base_;
  std::vector<double> deltas_;
};

struct StencilEnd {
  Vec x0;
  std::vector<Vec> quotient;  // D_k at eps
};

StencilEnd integrate_stencil(const SodeField& s, const Vec& p, const Vec& v, const std::vector<Vec>& dirs,
                             const std::vector<double>& deltas, double eps, const FlowOptions& opt) {
  const std::size_t n = s.dim(), m = deltas.size();
  const SodeField joint(std::make_shared<StencilModel>(s.model_ptr(), deltas), DomainKind::WholeBundle,
                        "difference-quotient stencil");
  Vec x(n * (1 + m), 0.0), y(n * (1 + m), 0.0);
  std::copy(p.begin(), p.end(), x.begin());
  std::copy(v.begin(), v.end(), y.begin());
  for (std::size_t k = 0; k < m; ++k) std::copy(dirs[k].begin(), dirs[k].end(), y.begin() + static_cast<std::ptrdiff_t>(n * (k + 1)));
  FlowOptions o = opt;
  o.chart.reset();
  const Trajectory tr = integrate(joint, TangentPoint(std::move(x), std::move(y)), 0.0, eps, o);
  if (tr.cause() != Termination::Reached) {
    IntervalBound b{tr.t_end(), tr.cause() == Termination::BlowUp ? BoundTag::VerifiedFinite : BoundTag::Truncated,
                    tr.cause()};
    throw EpsOutsideDomain("eps = " + fmt(eps) + " lies outside the domain of the geodesic or its difference stencil (" +
                               to_string(tr.cause()) + " at parameter " + fmt(tr.t_end()) +
                               "); use a smaller eps or step",
                           b);
  }
  const Vec end = tr.final_state().x;
  StencilEnd out;
  out.x0.assign(end.begin(), end.begin() + static_cast<std::ptrdiff_t>(n));
  for (std::size_t k = 0; k < m; ++k) {
    const auto first = end.begin() + static_cast<std::ptrdiff_t>(n * (k + 1));
    out.quotient.emplace_back(first, first + static_cast<std::ptrdiff_t>(n));
  }
  return out;
}

}  // namespace

ExpJacobian exp_jacobian(const SodeField& s, std::span<const double> p, std::span<const double> v, double eps,
                         double h, const FlowOptions& opt) {
  require_point(s, p, v);
  const std::size_t n = s.dim();
  double vmax = 0.0;
  for (double c : v) vmax = std::max(vmax, std::abs(c));
  if (h <= 0.0) h = 1e-5 * std::max(1.0, vmax);
  ExpJacobian out;
  out.step = h;
  out.matrix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  auto set = [&](std::size_t k, std::size_t j, double value) {
    out.matrix(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = value;
  };
  const Vec pv = to_vec(p), vv = to_vec(v);
  if (eps == 0.0) {
    // exp^0 is the constant map p.
  } else if (is_convention_point(s, v)) {
    for (std::size_t j = 0; j < n; ++j) {
      Vec vp(n, 0.0), vm(n, 0.0);
      vp[j] = h;
      vm[j] = -h;
      const Vec fp = exp_map(s, pv, vp, eps, opt), fm = exp_map(s, pv, vm, eps, opt);
      for (std::size_t k = 0; k < n; ++k) set(k, j, (fp[k] - fm[k]) / (2.0 * h));
    }
  } else {
    std::vector<Vec> dirs;
    std::vector<double> deltas;
    for (std::size_t j = 0; j < n; ++j) {
      Vec e(n, 0.0);
      e[j] = 1.0;
      dirs.push_back(e);
      dirs.push_back(e);
      deltas.push_back(h);
      deltas.push_back(-h);
    }
    const StencilEnd st = integrate_stencil(s, pv, vv, dirs, deltas, eps, opt);
    // (x(v + h e) - x(v - h e)) / 2h = (D_+ + D_-) / 2
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) set(k, j, 0.5 * (st.quotient[2 * j][k] + st.quotient[2 * j + 1][k]));
  }
  out.determinant = out.matrix.determinant();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.matrix);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  out.condition = smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
  return out;
}

ACurve a_curve(const SodeField& s, std::span<const double> p, std::span<const double> v, double eps,
               std::span<const double> a_grid, const FlowOptions& opt) {
  require_point(s, p, v);
  ACurve out;
  const Vec pv = to_vec(p);
  for (double a : a_grid) {
    try {
      out.points.push_back(exp_map(s, p, scaled(v, a), eps, opt));
      out.a.push_back(a);
    } catch (const DomainError& e) {
      out.errors.push_back("a = " + fmt(a) + ": " + e.what());
      out.truncated = true;
      break;
    }
  }
  if (eps == 0.0) return out;  // the constant curve p; S(p, 0) need not vanish

  // Five-point derivatives in a from the difference quotients of the stencil
  // a + q ha, q = -2..2 (the center values cancel).
  const std::size_t n = s.dim();
  for (std::size_t i = 0; i < out.a.size(); ++i) {
    const double a = out.a[i];
    const Vec center = scaled(v, a);
    if (is_convention_point(s, center)) continue;
    const double ha = 1e-3 * std::max(1.0, std::abs(a));
    try {
      const std::vector<Vec> dirs(4, to_vec(v));
      const std::vector<double> deltas{-2.0 * ha, -ha, ha, 2.0 * ha};
      const StencilEnd st = integrate_stencil(s, pv, center, dirs, deltas, eps, opt);
      const auto& D = st.quotient;
      Vec x1(n), x2(n);
      for (std::size_t k = 0; k < n; ++k) {
        // f(q) - f(0) = q ha D_q
        x1[k] = (-2.0 * D[0][k] + 8.0 * D[1][k] + 8.0 * D[2][k] - 2.0 * D[3][k]) / 12.0;
        x2[k] = (2.0 * D[0][k] - 16.0 * D[1][k] + 16.0 * D[2][k] - 2.0 * D[3][k]) / (12.0 * ha);
      }
      const Vec sv = s(st.x0, x1);
      for (std::size_t k = 0; k < n; ++k) out.residual = std::max(out.residual, std::abs(x2[k] - sv[k]));
      ++out.residual_points;
    } catch (const Error& e) {
      out.errors.push_back("a = " + fmt(a) + " (residual stencil): " + e.what());
    }
  }
  return out;
}

std::vector<double> linspace_step(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw ValidationError("grid needs lo <= hi and a positive step");
  std::vector<double> out;
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  for (std::size_t i = 0; i <= count; ++i) out.push_back(lo + static_cast<double>(i) * step);
  return out;
}

PlumeSpec PlumeSpec::figure_defaults(std::size_t n) {
  PlumeSpec spec;
  for (int d = 0; d < 3; ++d) {
    Vec v(n, 0.0);
    const double th = -0.5 + 0.5 * d;  // fan of three unit directions
    v[0] = std::cos(th);
    if (n > 1) v[1] = std::sin(th);
    else v[0] = d == 0 ? -1.0 : (d == 1 ? 0.5 : 1.0);
    spec.directions.push_back(v);
  }
  spec.a_grid = linspace_step(0.05, 1.0, 0.05);
  // Open interval 0 < eps < 3.
  for (int i = 1; i < 60; ++i) spec.eps_grid.push_back(0.05 * i);
  for (int i = 1; i < 6; ++i) spec.a_curve_eps.push_back(0.5 * i);
  return spec;
}

PlumeData plume(const SodeField& s, std::span<const double> p, const PlumeSpec& spec) {
  if (p.size() != s.dim()) throw ValidationError("plume: base point dimension mismatch");
  for (const auto& v : spec.directions)
    if (v.size() != s.dim()) throw ValidationError("plume: direction dimension mismatch");
  PlumeData out;
  out.p = to_vec(p);
  out.spec = spec;
  const std::size_t nd = spec.directions.size(), na = spec.a_grid.size();
  double eps_max = 0.0, eps_min = 0.0;
  for (double e : spec.eps_grid) {
    eps_max = std::max(eps_max, e);
    eps_min = std::min(eps_min, e);
  }
  for (double e : spec.a_curve_eps) {
    eps_max = std::max(eps_max, e);
    eps_min = std::min(eps_min, e);
  }

  out.geodesics.resize(nd * na);
  parallel_for(nd * na, [&](std::size_t idx) {
    PlumeGeodesic g;
    g.direction = idx / na;
    g.a = spec.a_grid[idx % na];
    g.points.resize(spec.eps_grid.size());
    const Vec v = scaled(spec.directions[g.direction], g.a);
    if (is_convention_point(s, v)) {
      for (auto& pt : g.points) pt = out.p;
      out.geodesics[idx] = std::move(g);
      return;
    }
    try {
      const TangentPoint init(out.p, v);
      Trajectory fwd, bwd;
      if (eps_max > 0.0) fwd = integrate(s, init, 0.0, eps_max, spec.flow);
      if (eps_min < 0.0) bwd = integrate(s, init, 0.0, eps_min, spec.flow);
      for (std::size_t e = 0; e < spec.eps_grid.size(); ++e) {
        const double t = spec.eps_grid[e];
        const Trajectory& tr = t >= 0.0 ? fwd : bwd;
        if (t == 0.0) g.points[e] = out.p;
        else if (tr.size() > 0 && t >= tr.t_min() && t <= tr.t_max()) g.points[e] = tr.position(t);
      }
      const Trajectory& fw = eps_max > 0.0 ? fwd : bwd;
      if (fw.cause() != Termination::Reached) g.error = "integration stopped: " + to_string(fw.cause());
    } catch (const Error& e) {
      g.error = e.what();
    }
    out.geodesics[idx] = std::move(g);
  });

  const std::size_t ne = spec.a_curve_eps.size();
  out.a_curves.resize(ne * nd);
  parallel_for(ne * nd, [&](std::size_t idx) {
    PlumeACurve c;
    c.eps = spec.a_curve_eps[idx / nd];
    c.direction = idx % nd;
    c.points.resize(na);
    for (std::size_t i = 0; i < na; ++i) {
      try {
        c.points[i] = exp_map(s, out.p, scaled(spec.directions[c.direction], spec.a_grid[i]), c.eps, spec.flow);
      } catch (const Error& e) {
        c.errors.push_back(e.what());
      }
    }
    out.a_curves[idx] = std::move(c);
  });

  // Consistency between the two slicings at every shared grid node.
  for (const auto& c : out.a_curves) {
    for (std::size_t i = 0; i < na; ++i) {
      if (!c.points[i]) continue;
      const PlumeGeodesic& g = out.geodesics[c.direction * na + i];
      Vec ref;
      const auto it = std::find(spec.eps_grid.begin(), spec.eps_grid.end(), c.eps);
      if (it != spec.eps_grid.end()) {
        const auto& pt = g.points[static_cast<std::size_t>(it - spec.eps_grid.begin())];
        if (!pt) continue;
        ref = *pt;
      } else {
        // Off-grid eps: evaluate the same geodesic's dense output.
        const Vec v = scaled(spec.directions[c.direction], g.a);
        if (is_convention_point(s, v)) {
          ref = out.p;
        } else {
          try {
            ref = integrate(s, TangentPoint(out.p, v), 0.0, c.eps, spec.flow).position(c.eps);
          } catch (const Error&) {
            continue;
          }
        }
      }
      for (std::size_t k = 0; k < ref.size(); ++k)
        out.consistency = std::max(out.consistency, std::abs(ref[k] - (*c.points[i])[k]));
      ++out.consistency_nodes;
    }
  }
  return out;
}

std::vector<ConjugateBracket> conjugate_scan(const SodeField& s, std::span<const double> p, std::span<const double> v,
                                             std::span<const double> eps_grid, const FlowOptions& opt, double small) {
  std::vector<double> grid;
  for (double e : eps_grid)
    if (e != 0.0) grid.push_back(e);
  std::vector<double> det(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) { det[i] = exp_jacobian(s, p, v, grid[i], 0.0, opt).determinant; });

  std::vector<ConjugateBracket> out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (std::abs(det[i]) < small) out.push_back({grid[i], grid[i], det[i], det[i], true});
    if (i + 1 == grid.size()) break;
    // Crossing eps = 0 flips the sign of det trivially in odd dimension.
    if ((grid[i] < 0.0) != (grid[i + 1] < 0.0)) continue;
    if (!(det[i] * det[i + 1] < 0.0)) continue;
    double lo = grid[i], hi = grid[i + 1], dlo = det[i], dhi = det[i + 1];
    while (std::abs(hi - lo) > 1e-4) {
      const double mid = 0.5 * (lo + hi);
      const double dm = exp_jacobian(s, p, v, mid, 0.0, opt).determinant;
      if (dm == 0.0) {
        lo = hi = mid;
        dlo = dhi = 0.0;
        break;
      }
      if ((dm < 0.0) == (dlo < 0.0)) {
        lo = mid;
        dlo = dm;
      } else {
        hi = mid;
        dhi = dm;
      }
    }
    out.push_back({lo, hi, dlo, dhi, false});
  }
  return out;
}

}  // namespace sode
