#include "sode/connection.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

namespace sode {

std::string to_string(ConnectionMode m) {
  return m == ConnectionMode::FcncVerbatim ? "fcnc-verbatim" : "euler-normalized";
}

// ---- vector fields --------------------------------------------------------

VectorFieldSpec::VectorFieldSpec(std::vector<Expression> components) : comps_(std::move(components)) {
  if (comps_.empty()) throw ValidationError("vector field needs n > 0 components");
  for (const auto& e : comps_) {
    if (e.max_y_index() > 0)
      throw ValidationError("vector field component '" + e.str() + "' depends on fiber coordinates");
    if (static_cast<std::size_t>(e.max_x_index()) > comps_.size())
      throw ValidationError("vector field component '" + e.str() + "' exceeds dimension " +
                            std::to_string(comps_.size()));
  }
}

VectorFieldSpec VectorFieldSpec::parse(const std::vector<std::string>& components) {
  std::vector<Expression> e;
  for (const auto& s : components) e.push_back(Expression::parse(s, components.size()));
  return VectorFieldSpec(std::move(e));
}

VectorFieldSpec VectorFieldSpec::constant(std::span<const double> c) {
  std::vector<Expression> e;
  for (double v : c) e.push_back(Expression::number(v));
  return VectorFieldSpec(std::move(e));
}

namespace {

template <typename Span>
using scalar_of = std::remove_const_t<typename Span::element_type>;

// d/dt f(x + t u) at t = 0 for a generic field callable f.
template <typename T, typename F>
std::vector<T> directional(const F& f, std::span<const T> x, std::span<const T> u) {
  std::vector<Dual<T>> xd(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xd[i] = Dual<T>{x[i], u[i]};
  const std::vector<Dual<T>> fd = f(std::span<const Dual<T>>(xd));
  std::vector<T> out(fd.size());
  for (std::size_t k = 0; k < fd.size(); ++k) out[k] = fd[k].d;
  return out;
}

template <typename T>
std::vector<T> apply_connection(const ConnectionField& c, std::span<const T> x, std::span<const T> y,
                                std::span<const T> u) {
  const std::size_t n = c.dim();
  std::vector<T> g(n * n);
  c.eval<T>(x, y, std::span<T>(g));
  std::vector<T> out(n, T(0.0));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i) out[k] += g[k * n + i] * u[i];
  return out;
}

// (nabla_U V)(x) for generic field callables.
template <typename T, typename FU, typename FV>
std::vector<T> nabla(const ConnectionField& c, const FU& U, const FV& V, std::span<const T> x) {
  const std::vector<T> u = U(x);
  const std::vector<T> v = V(x);
  std::vector<T> out = directional<T>(V, x, std::span<const T>(u));
  const std::vector<T> gu = apply_connection<T>(c, x, std::span<const T>(v), std::span<const T>(u));
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= gu[k];
  return out;
}

auto field_of(const VectorFieldSpec& f) {
  return [&f](auto x) { return f.template eval<scalar_of<decltype(x)>>(x); };
}

void require_dim(std::size_t n, std::size_t got, const char* what) {
  if (n != got)
    throw ValidationError(std::string(what) + ": expected dimension " + std::to_string(n) + ", got " +
                          std::to_string(got));
}

void check_fiber(const ConnectionField& c, std::span<const double> x, std::span<const double> v) {
  c.check_in_domain(TangentPoint(Vec(x.begin(), x.end()), Vec(v.begin(), v.end())));
}

}  // namespace

// ---- spray <-> connection -------------------------------------------------

SodeField spray_from_connection(const ConnectionField& c) {
  const std::size_t n = c.dim();
  if (const auto& ex = c.expressions()) {
    std::vector<Expression> s;
    for (std::size_t k = 0; k < n; ++k) {
      std::optional<Expression> acc;
      for (std::size_t i = 0; i < n; ++i) {
        const Expression& g = (*ex)[k * n + i];
        if (g.is_zero_literal()) continue;
        Expression term = g * Expression::y(static_cast<int>(i + 1));
        acc = acc ? *acc + term : term;
      }
      s.push_back(acc ? *acc : Expression::number(0.0));
    }
    return SodeField(std::move(s), c.domain());
  }
  return SodeField(std::make_shared<ContractionModel>(c.model_ptr()), c.domain(),
                   "S^k = G^k_i y^i of " + c.description());
}

CompatibilityReport compatibility(const ConnectionField& c, const SodeField& s, const SampleSpec& spec) {
  require_dim(c.dim(), s.dim(), "compatibility");
  const std::size_t n = c.dim();
  CompatibilityReport r;
  for (const auto& p : sample_points(n, spec, true)) {
    try {
      const Eigen::MatrixXd g = c(p.x, p.y);
      const Vec sv = s(p.x, p.y);
      const Eigen::VectorXd gy = g * Eigen::Map<const Eigen::VectorXd>(p.y.data(), static_cast<Eigen::Index>(n));
      for (std::size_t k = 0; k < n; ++k)
        r.residual = std::max(r.residual, std::abs(gy(static_cast<Eigen::Index>(k)) - sv[k]));
      ++r.samples;
    } catch (const DomainError&) {
    }
  }
  if (r.samples == 0) throw ValidationError("compatibility: no sample could be evaluated");
  r.compatible = r.residual < 1e-8;
  return r;
}

ConnectionField connection_from_spray(const SodeField& s, ConnectionMode mode, const SampleSpec& spec) {
  if (mode == ConnectionMode::FcncVerbatim)
    return ConnectionField(std::make_shared<FiberJacobianModel>(s.model_ptr(), 1.0), s.domain(),
                           "dS/dy of " + s.description());

  double m = 0.0;
  if (s.declared_degree) {
    m = *s.declared_degree;
  } else {
    const HomogeneityReport h = classify_homogeneity(s, spec);
    if (h.verdict == HomogeneityVerdict::ZeroField) {
      m = 1.0;  // every degree; the derivative is zero anyway
    } else if (h.verdict == HomogeneityVerdict::Inhomogeneous) {
      const ConnectionField verbatim = connection_from_spray(s, ConnectionMode::FcncVerbatim, spec);
      const CompatibilityReport r = compatibility(verbatim, s, spec);
      throw InhomogeneousSprayError(
          "euler-normalized connection needs a homogeneous spray, but the classifier reports it inhomogeneous "
          "(residual " + std::to_string(h.max_residual) + "); use fcnc-verbatim, whose compatibility residual is " +
              std::to_string(r.residual),
          r);
    } else {
      m = h.degree;
    }
  }
  if (m == 0.0) throw ValidationError("euler-normalized connection is undefined for degree 0");
  return ConnectionField(std::make_shared<FiberJacobianModel>(s.model_ptr(), 1.0 / m), s.domain(),
                         "(1/" + std::to_string(m) +") dS/dy of " + s.description());
}

// ---- covariant derivative, difference, torsion -----------------------------

Vec covariant_derivative(const ConnectionField& c, const VectorFieldSpec& U, const VectorFieldSpec& V,
                         std::span<const double> x) {
  require_dim(c.dim(), U.dim(), "covariant derivative U");
  require_dim(c.dim(), V.dim(), "covariant derivative V");
  require_dim(c.dim(), x.size(), "covariant derivative base point");
  check_fiber(c, x, V(x));
  return nabla<double>(c, field_of(U), field_of(V), x);
}

Vec difference_operator(const ConnectionField& c1, const ConnectionField& c2, std::span<const double> u,
                        std::span<const double> v, std::span<const double> x) {
  require_dim(c1.dim(), c2.dim(), "difference operator");
  require_dim(c1.dim(), u.size(), "difference operator u");
  require_dim(c1.dim(), v.size(), "difference operator v");
  require_dim(c1.dim(), x.size(), "difference operator x");
  check_fiber(c1, x, v);
  check_fiber(c2, x, v);
  const Vec g1 = apply_connection<double>(c1, x, v, u);
  const Vec g2 = apply_connection<double>(c2, x, v, u);
  Vec out(u.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = g2[k] - g1[k];
  return out;
}

ConnectionField lc_reference(const ConnectionField& c, const SampleSpec& spec) {
  const SodeField s = spray_from_connection(c);
  try {
    return connection_from_spray(s, ConnectionMode::EulerNormalized, spec);
  } catch (const InhomogeneousSprayError& e) {
    throw InhomogeneousSprayError(
        "torsion is undefined here: the induced spray is inhomogeneous and no general torsion-free "
        "construction is available (" + std::string(e.what()) + ")",
        e.report());
  }
}

Vec torsion(const ConnectionField& c, const ConnectionField& lc, std::span<const double> u,
            std::span<const double> v, std::span<const double> x) {
  Vec d = difference_operator(c, lc, u, v, x);
  for (double& e : d) e *= 2.0;
  return d;
}

Vec torsion(const ConnectionField& c, std::span<const double> u, std::span<const double> v,
            std::span<const double> x, const SampleSpec& spec) {
  return torsion(c, lc_reference(c, spec), u, v, x);
}

// ---- curvature -------------------------------------------------------------

Vec lie_bracket(const VectorFieldSpec& U, const VectorFieldSpec& V, std::span<const double> x) {
  const Vec u = U(x), v = V(x);
  const Vec dv = directional<double>(field_of(V), x, std::span<const double>(u));
  const Vec du = directional<double>(field_of(U), x, std::span<const double>(v));
  Vec out(u.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = dv[k] - du[k];
  return out;
}

Vec curvature_bracket(const ConnectionField& c, const VectorFieldSpec& U, const VectorFieldSpec& V,
                      std::span<const double> w, std::span<const double> x) {
  const std::size_t n = c.dim();
  require_dim(n, U.dim(), "curvature U");
  require_dim(n, V.dim(), "curvature V");
  require_dim(n, w.size(), "curvature w");
  require_dim(n, x.size(), "curvature x");
  check_fiber(c, x, w);

  // Horizontal lift of a base field as a field on TM, state z = (x, y).
  auto lift = [&c, n](const VectorFieldSpec& F) {
    return [&c, &F, n](auto z) {
      using S = scalar_of<decltype(z)>;
      const std::span<const S> xs = z.subspan(0, n), ys = z.subspan(n, n);
      std::vector<S> f = F.template eval<S>(xs);
      std::vector<S> gy = apply_connection<S>(c, xs, ys, std::span<const S>(f));
      f.insert(f.end(), gy.begin(), gy.end());
      return f;
    };
  };
  const auto Ub = lift(U);
  const auto Vb = lift(V);
  Vec z(x.begin(), x.end());
  z.insert(z.end(), w.begin(), w.end());
  const std::span<const double> zs(z);
  const Vec ua = Ub(zs), va = Vb(zs);
  // [V_bar, U_bar] = DU_bar . V_bar - DV_bar . U_bar
  const Vec dU = directional<double>(Ub, zs, std::span<const double>(va));
  const Vec dV = directional<double>(Vb, zs, std::span<const double>(ua));
  Vec X(n), Y(n);
  for (std::size_t k = 0; k < n; ++k) {
    X[k] = dU[k] - dV[k];
    Y[k] = dU[n + k] - dV[n + k];
  }
  const Vec gx = apply_connection<double>(c, x, w, X);
  for (std::size_t k = 0; k < n; ++k) Y[k] -= gx[k];
  return Y;
}

Vec curvature_nabla(const ConnectionField& c, const VectorFieldSpec& U, const VectorFieldSpec& V,
                    const VectorFieldSpec& W, std::span<const double> x) {
  const std::size_t n = c.dim();
  require_dim(n, U.dim(), "curvature U");
  require_dim(n, V.dim(), "curvature V");
  require_dim(n, W.dim(), "curvature W");
  require_dim(n, x.size(), "curvature x");
  check_fiber(c, x, W(x));
  const auto Uf = field_of(U), Vf = field_of(V), Wf = field_of(W);
  const auto nVW = [&](auto z) { return nabla<scalar_of<decltype(z)>>(c, Vf, Wf, z); };
  const auto nUW = [&](auto z) { return nabla<scalar_of<decltype(z)>>(c, Uf, Wf, z); };
  const auto bracket = [&](auto z) {
    using S = scalar_of<decltype(z)>;
    const std::vector<S> u = Uf(z), v = Vf(z);
    std::vector<S> dv = directional<S>(Vf, z, std::span<const S>(u));
    const std::vector<S> du = directional<S>(Uf, z, std::span<const S>(v));
    for (std::size_t k = 0; k < dv.size(); ++k) dv[k] -= du[k];
    return dv;
  };
  const Vec a = nabla<double>(c, Uf, nVW, x);
  const Vec b = nabla<double>(c, Vf, nUW, x);
  const Vec d = nabla<double>(c, bracket, Wf, x);
  Vec out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = a[k] - b[k] - d[k];
  return out;
}

double covariant_acceleration_residual(const ConnectionField& c, const Curve& curve,
                                       std::span<const double> probe_times) {
  double r = 0.0;
  for (double t : probe_times) {
    const CurveJet j = curve(t);
    const TangentPoint k = c.connector(DoubleTangent(j.x, j.v, j.v, j.a));
    for (double e : k.y) r = std::max(r, std::abs(e));
  }
  return r;
}

}  // namespace sode
