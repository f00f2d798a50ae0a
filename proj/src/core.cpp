#include "sode/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "sode/parallel.hpp"

namespace sode {

std::string to_string(DomainKind d) {
  return d == DomainKind::WholeBundle ? "whole-bundle" : "zero-section-excluded";
}

std::string to_string(HomogeneityKind k) {
  switch (k) {
    case HomogeneityKind::Complete: return "complete";
    case HomogeneityKind::Projective: return "projective";
    case HomogeneityKind::Positive: return "positive";
    case HomogeneityKind::None: return "none";
  }
  return "none";
}

namespace {

void require_dim(std::size_t expected, std::size_t got, const char* what) {
  if (expected != got)
    throw ValidationError(std::string(what) + ": expected dimension " + std::to_string(expected) + ", got " +
                          std::to_string(got));
}

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double e : v) m = std::max(m, std::abs(e));
  return m;
}

}  // namespace

// ---- points ---------------------------------------------------------------

TangentPoint::TangentPoint(Vec base, Vec fiber) : x(std::move(base)), y(std::move(fiber)) {
  if (x.empty()) throw ValidationError("tangent point needs n > 0");
  require_dim(x.size(), y.size(), "tangent point fiber");
}

bool TangentPoint::on_zero_section() const noexcept {
  return std::all_of(y.begin(), y.end(), [](double c) { return c == 0.0; });
}

DoubleTangent::DoubleTangent(Vec x_, Vec y_, Vec X_, Vec Y_)
    : x(std::move(x_)), y(std::move(y_)), X(std::move(X_)), Y(std::move(Y_)) {
  if (x.empty()) throw ValidationError("double tangent needs n > 0");
  require_dim(x.size(), y.size(), "double tangent y");
  require_dim(x.size(), X.size(), "double tangent X");
  require_dim(x.size(), Y.size(), "double tangent Y");
}

bool DoubleTangent::in_fix_j(double tol) const noexcept {
  for (std::size_t i = 0; i < y.size(); ++i)
    if (std::abs(X[i] - y[i]) > tol) return false;
  return true;
}

bool DoubleTangent::is_vertical(double tol) const noexcept { return inf_norm(X) <= tol; }

DoubleTangent canonical_involution(const DoubleTangent& z) { return DoubleTangent(z.x, z.X, z.y, z.Y); }

TangentPoint vertical_connector_K(const DoubleTangent& z, double tol) {
  const double norm = inf_norm(z.X);
  if (norm > tol) {
    std::ostringstream os;
    os << "K is defined on vertical vectors only; ||X||_inf = " << norm;
    throw ValidationError(os.str());
  }
  return TangentPoint(z.x, z.Y);
}

DoubleTangent vertical_lift(const TangentPoint& v, std::span<const double> w) {
  require_dim(v.dim(), w.size(), "vertical lift");
  return DoubleTangent(v.x, v.y, Vec(v.dim(), 0.0), Vec(w.begin(), w.end()));
}

// ---- models ---------------------------------------------------------------

void raise_depth_exceeded(const char* who) {
  throw NumericalError(std::string(who) + ": derivative order exceeds the supported dual depth");
}

ExpressionModel::ExpressionModel(std::size_t dim, std::vector<Expression> components)
    : dim_(dim), components_(std::move(components)) {
  for (const auto& e : components_) {
    if (static_cast<std::size_t>(std::max(e.max_x_index(), e.max_y_index())) > dim_)
      throw ValidationError("expression '" + e.str() + "' references a coordinate beyond dimension " +
                            std::to_string(dim_));
  }
}

FiberJacobianModel::FiberJacobianModel(std::shared_ptr<const FieldModel> base, double scale)
    : base_(std::move(base)), scale_(scale) {
  require_dim(base_->dim(), base_->outputs(), "fiber Jacobian base outputs");
}

ContractionModel::ContractionModel(std::shared_ptr<const FieldModel> coefficients)
    : coeffs_(std::move(coefficients)) {
  require_dim(coeffs_->dim() * coeffs_->dim(), coeffs_->outputs(), "contraction coefficients");
}

SumModel::SumModel(std::shared_ptr<const FieldModel> a, std::shared_ptr<const FieldModel> b)
    : a_(std::move(a)), b_(std::move(b)) {
  require_dim(a_->dim(), b_->dim(), "sum model");
  require_dim(a_->outputs(), b_->outputs(), "sum model outputs");
}

// ---- fields ---------------------------------------------------------------

SodeField::SodeField(std::vector<Expression> coefficients, DomainKind domain)
    : domain_(domain), exprs_(coefficients) {
  if (coefficients.empty()) throw ValidationError("SODE needs n > 0 coefficients");
  const std::size_t n = coefficients.size();
  model_ = std::make_shared<ExpressionModel>(n, std::move(coefficients));
  std::ostringstream os;
  os << "S = (";
  for (std::size_t k = 0; k < n; ++k) os << (k ? ", " : "") << (*exprs_)[k].str();
  os << ")";
  description_ = os.str();
}

SodeField::SodeField(std::shared_ptr<const FieldModel> model, DomainKind domain, std::string description)
    : model_(std::move(model)), domain_(domain), description_(std::move(description)) {
  require_dim(model_->dim(), model_->outputs(), "SODE coefficient count");
}

void SodeField::check_in_domain(const TangentPoint& v) const {
  require_dim(dim(), v.dim(), "SODE argument");
  if (excludes_zero_section() && v.on_zero_section())
    throw ValidationError("point lies on the zero section, which this field excludes");
}

Vec SodeField::operator()(std::span<const double> x, std::span<const double> y) const {
  check_in_domain(TangentPoint(Vec(x.begin(), x.end()), Vec(y.begin(), y.end())));
  Vec out(dim());
  model_->eval(x, y, std::span<double>(out));
  return out;
}

DoubleTangent SodeField::section(const TangentPoint& v) const {
  Vec s = (*this)(v.x, v.y);
  return DoubleTangent(v.x, v.y, v.y, std::move(s));
}

ConnectionField::ConnectionField(std::size_t n, std::vector<Expression> coefficients, DomainKind domain)
    : domain_(domain), exprs_(coefficients) {
  if (n == 0 || coefficients.size() != n * n)
    throw ValidationError("connection needs n*n coefficient expressions");
  model_ = std::make_shared<ExpressionModel>(n, std::move(coefficients));
  std::ostringstream os;
  os << "G = [";
  for (std::size_t k = 0; k < n; ++k) {
    os << (k ? "; " : "");
    for (std::size_t i = 0; i < n; ++i) os << (i ? ", " : "") << (*exprs_)[k * n + i].str();
  }
  os << "]";
  description_ = os.str();
}

ConnectionField::ConnectionField(std::shared_ptr<const FieldModel> model, DomainKind domain,
                                 std::string description)
    : model_(std::move(model)), domain_(domain), description_(std::move(description)) {
  require_dim(model_->dim() * model_->dim(), model_->outputs(), "connection coefficient count");
}

void ConnectionField::check_in_domain(const TangentPoint& v) const {
  require_dim(dim(), v.dim(), "connection argument");
  if (excludes_zero_section() && v.on_zero_section())
    throw ValidationError("point lies on the zero section, which this connection excludes");
}

Eigen::MatrixXd ConnectionField::operator()(std::span<const double> x, std::span<const double> y) const {
  check_in_domain(TangentPoint(Vec(x.begin(), x.end()), Vec(y.begin(), y.end())));
  const std::size_t n = dim();
  Vec flat(n * n);
  model_->eval(x, y, std::span<double>(flat));
  Eigen::MatrixXd g(n, n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i) g(k, i) = flat[k * n + i];
  return g;
}

DoubleTangent ConnectionField::horizontal(const TangentPoint& v, std::span<const double> u) const {
  require_dim(dim(), u.size(), "horizontal lift");
  const Eigen::MatrixXd g = (*this)(v.x, v.y);
  const Eigen::VectorXd uu = Eigen::Map<const Eigen::VectorXd>(u.data(), u.size());
  const Eigen::VectorXd Y = g * uu;
  return DoubleTangent(v.x, v.y, Vec(u.begin(), u.end()), Vec(Y.data(), Y.data() + Y.size()));
}

TangentPoint ConnectionField::connector(const DoubleTangent& z) const {
  const Eigen::MatrixXd g = (*this)(z.x, z.y);
  const Eigen::VectorXd X = Eigen::Map<const Eigen::VectorXd>(z.X.data(), z.X.size());
  const Eigen::VectorXd Y = Eigen::Map<const Eigen::VectorXd>(z.Y.data(), z.Y.size());
  const Eigen::VectorXd k = Y - g * X;
  return TangentPoint(z.x, Vec(k.data(), k.data() + k.size()));
}

// ---- boxes and sampling ---------------------------------------------------

Box Box::cube(std::size_t n, double lo, double hi) { return Box(std::vector<Interval>(n, Interval{lo, hi})); }

bool Box::contains(std::span<const double> p, double slack) const noexcept {
  if (p.size() != axes.size()) return false;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] < axes[i].lo - slack || p[i] > axes[i].hi + slack) return false;
  return true;
}

Vec Box::center() const {
  Vec c(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) c[i] = 0.5 * (axes[i].lo + axes[i].hi);
  return c;
}

Box Box::scaled(double factor) const {
  Box out = *this;
  for (auto& a : out.axes) {
    const double mid = 0.5 * (a.lo + a.hi);
    const double half = 0.5 * (a.hi - a.lo) * factor;
    a = {mid - half, mid + half};
  }
  return out;
}

Box Box::hull(const Box& other) const {
  Box out = *this;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    out.axes[i].lo = std::min(axes[i].lo, other.axes[i].lo);
    out.axes[i].hi = std::max(axes[i].hi, other.axes[i].hi);
  }
  return out;
}

void Box::expand_to(std::span<const double> p) {
  for (std::size_t i = 0; i < axes.size(); ++i) {
    axes[i].lo = std::min(axes[i].lo, p[i]);
    axes[i].hi = std::max(axes[i].hi, p[i]);
  }
}

std::string Box::str() const {
  std::ostringstream os;
  os.precision(17);
  os << "box(";
  for (std::size_t i = 0; i < axes.size(); ++i) os << (i ? "; " : "") << axes[i].lo << "," << axes[i].hi;
  os << ")";
  return os.str();
}

std::vector<TangentPoint> sample_points(std::size_t n, const SampleSpec& spec, bool avoid_zero) {
  const Box xb = spec.x_box.value_or(Box::cube(n, -1.0, 1.0));
  const Box yb = spec.y_box.value_or(Box::cube(n, -1.0, 1.0));
  require_dim(n, xb.dim(), "sample x box");
  require_dim(n, yb.dim(), "sample y box");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](const Box& b) {
    Vec p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = b.axes[i].lo + (b.axes[i].hi - b.axes[i].lo) * unit(rng);
    return p;
  };
  // Fibers near 0 make ratio tests ill-conditioned; keep them at a fixed
  // fraction of the box scale.
  double yscale = 0.0;
  for (const auto& a : yb.axes) yscale = std::max({yscale, std::abs(a.lo), std::abs(a.hi)});
  std::vector<TangentPoint> pts;
  pts.reserve(spec.count);
  std::size_t attempts = 0;
  while (pts.size() < spec.count) {
    Vec x = draw(xb);
    Vec y = draw(yb);
    if (avoid_zero && inf_norm(y) < 0.05 * yscale) {
      if (++attempts > 100 * spec.count) throw ValidationError("sampling box cannot avoid the zero section");
      continue;
    }
    pts.emplace_back(std::move(x), std::move(y));
  }
  return pts;
}

// ---- homogeneity ----------------------------------------------------------

std::string HomogeneityReport::label(const char* prefix) const {
  std::ostringstream os;
  os.precision(12);
  switch (verdict) {
    case HomogeneityVerdict::ZeroField: return "zero field (every degree)";
    case HomogeneityVerdict::Inhomogeneous: return "inhomogeneous";
    case HomogeneityVerdict::Homogeneous: os << prefix << "(" << degree << ")-" << to_string(kind); return os.str();
  }
  return "inhomogeneous";
}

namespace {

struct ScaledSample {
  Vec base;                 // f(x, y)
  std::vector<Vec> pos;     // f(x, a y), a in kPositiveScalars
  std::vector<Vec> neg;     // f(x, a y), a in kNegativeScalars; empty entry = evaluation failed
  std::optional<Vec> zero;  // f(x, 0)
  bool ok = false;
};

std::optional<Vec> try_eval(const FieldModel& f, std::span<const double> x, std::span<const double> y) {
  Vec out(f.outputs());
  try {
    f.eval(x, y, std::span<double>(out));
  } catch (const DomainError&) {
    return std::nullopt;
  }
  return out;
}

Vec scaled(std::span<const double> y, double a) {
  Vec out(y.begin(), y.end());
  for (double& c : out) c *= a;
  return out;
}

// max_k |fa_k - s f_k| / max(|s f_k|, |fa_k|, floor)
double relative_residual(const Vec& fa, const Vec& f, double s, double floor) {
  double r = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double expect = s * f[k];
    const double den = std::max({std::abs(expect), std::abs(fa[k]), floor});
    const double diff = std::abs(fa[k] - expect);
    if (diff == 0.0) continue;
    r = std::max(r, diff / den);
  }
  return r;
}

}  // namespace

HomogeneityReport classify_homogeneity(const FieldModel& f, DomainKind domain, const SampleSpec& spec) {
  const std::size_t n = f.dim();
  const bool whole = domain == DomainKind::WholeBundle;
  const auto points = sample_points(n, spec, true);

  std::vector<ScaledSample> samples(points.size());
  parallel_for(points.size(), [&](std::size_t i) {
    const auto& p = points[i];
    ScaledSample s;
    auto base = try_eval(f, p.x, p.y);
    if (!base) {
      samples[i] = std::move(s);
      return;
    }
    s.base = std::move(*base);
    for (double a : kPositiveScalars) {
      auto v = try_eval(f, p.x, scaled(p.y, a));
      if (!v) {
        samples[i] = ScaledSample{};
        return;
      }
      s.pos.push_back(std::move(*v));
    }
    for (double a : kNegativeScalars) {
      auto v = try_eval(f, p.x, scaled(p.y, a));
      s.neg.push_back(v ? std::move(*v) : Vec{});
    }
    if (whole) s.zero = try_eval(f, p.x, Vec(n, 0.0));
    s.ok = true;
    samples[i] = std::move(s);
  });

  HomogeneityReport report;
  double fmax = 0.0;
  for (const auto& s : samples) {
    if (!s.ok) continue;
    ++report.samples;
    fmax = std::max(fmax, inf_norm(s.base));
    for (const auto& v : s.pos) fmax = std::max(fmax, inf_norm(v));
    for (const auto& v : s.neg) fmax = std::max(fmax, inf_norm(v));
  }
  if (report.samples == 0) throw ValidationError("homogeneity test: no sample could be evaluated");
  if (fmax == 0.0) {
    report.verdict = HomogeneityVerdict::ZeroField;
    report.kind = whole ? HomogeneityKind::Complete : HomogeneityKind::Projective;
    return report;
  }

  // Degree by least squares through the origin of log|f(x,ay)|/|f(x,y)| vs log a.
  double num = 0.0, den = 0.0;
  for (const auto& s : samples) {
    if (!s.ok) continue;
    const double b = inf_norm(s.base);
    if (b == 0.0) continue;
    for (std::size_t j = 0; j < std::size(kPositiveScalars); ++j) {
      const double fa = inf_norm(s.pos[j]);
      if (fa == 0.0) continue;
      const double la = std::log(kPositiveScalars[j]);
      num += la * (std::log(fa) - std::log(b));
      den += la * la;
    }
  }
  double m = den > 0.0 ? num / den : 0.0;
  const double rounded = std::round(m);
  if (std::abs(m - rounded) < 1e-7) m = rounded;
  const bool integral = m == std::round(m);
  report.degree = m;

  const double floor = 1e-12 * fmax;
  double res_pos = 0.0, res_neg = 0.0, res_zero = 0.0;
  bool neg_ok = integral, zero_ok = whole && m >= 0.0;
  for (const auto& s : samples) {
    if (!s.ok) continue;
    for (std::size_t j = 0; j < std::size(kPositiveScalars); ++j)
      res_pos = std::max(res_pos, relative_residual(s.pos[j], s.base, std::pow(kPositiveScalars[j], m), floor));
    if (neg_ok) {
      for (std::size_t j = 0; j < std::size(kNegativeScalars); ++j) {
        if (s.neg[j].empty()) {
          neg_ok = false;
          break;
        }
        res_neg = std::max(res_neg, relative_residual(s.neg[j], s.base, std::pow(kNegativeScalars[j], m), floor));
      }
    }
    if (zero_ok) {
      if (!s.zero) {
        zero_ok = false;
      } else {
        res_zero = std::max(res_zero, relative_residual(*s.zero, s.base, m == 0.0 ? 1.0 : 0.0, floor));
      }
    }
  }

  const double tol = spec.tolerance;
  if (res_pos > tol) {
    report.verdict = HomogeneityVerdict::Inhomogeneous;
    report.max_residual = res_pos;
    return report;
  }
  report.verdict = HomogeneityVerdict::Homogeneous;
  report.kind = HomogeneityKind::Positive;
  report.max_residual = res_pos;
  if (neg_ok && res_neg <= tol) {
    report.kind = HomogeneityKind::Projective;
    report.max_residual = std::max(res_pos, res_neg);
    if (zero_ok && res_zero <= tol) {
      report.kind = HomogeneityKind::Complete;
      report.max_residual = std::max(report.max_residual, res_zero);
    }
  }
  return report;
}

HomogeneityReport classify_homogeneity(const SodeField& s, const SampleSpec& spec) {
  return classify_homogeneity(s.model(), s.domain(), spec);
}

HomogeneityReport classify_homogeneity(const ConnectionField& c, const SampleSpec& spec) {
  return classify_homogeneity(c.model(), c.domain(), spec);
}

ConnectionShapeReport classify_connection_shape(const ConnectionField& c, const SampleSpec& spec) {
  const std::size_t n = c.dim();
  ConnectionShapeReport r;
  r.vertical = classify_homogeneity(c, spec);

  const auto points = sample_points(n, spec, true);
  const auto more = sample_points(n, SampleSpec{spec.x_box, spec.y_box, spec.count, spec.seed + 7919, spec.tolerance}, true);
  const bool whole = c.domain() == DomainKind::WholeBundle;

  double scale = 0.0, zero_max = 0.0, zero_limit = 0.0, additivity = 0.0, symmetry = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    const auto& q = more[i];
    const Eigen::MatrixXd g = c(p.x, p.y);
    scale = std::max(scale, g.cwiseAbs().maxCoeff());
    if (whole) zero_max = std::max(zero_max, c(p.x, Vec(n, 0.0)).cwiseAbs().maxCoeff());
    zero_limit = std::max(zero_limit, c(p.x, scaled(p.y, 1e-6)).cwiseAbs().maxCoeff());

    Vec sum(n);
    for (std::size_t k = 0; k < n; ++k) sum[k] = p.y[k] + q.y[k];
    const Eigen::MatrixXd gq = c(p.x, q.y);
    const Eigen::MatrixXd gs = c(p.x, sum);
    const double den = std::max({gs.cwiseAbs().maxCoeff(), (g + gq).cwiseAbs().maxCoeff(), 1e-300});
    additivity = std::max(additivity, (gs - g - gq).cwiseAbs().maxCoeff() / den);

    // J-invariance of the connector: G(x,y)X = G(x,X)y.
    const Eigen::Map<const Eigen::VectorXd> y(p.y.data(), n), X(q.y.data(), n);
    const Eigen::VectorXd lhs = g * X, rhs = gq * y;
    const double sden = std::max({lhs.cwiseAbs().maxCoeff(), rhs.cwiseAbs().maxCoeff(), 1e-300});
    symmetry = std::max(symmetry, (lhs - rhs).cwiseAbs().maxCoeff() / sden);
  }
  const double abs_tol = 1e-12 * std::max(1.0, scale);
  if (whole) {
    r.zero_section_max = zero_max;
    r.zero_preserving = zero_max <= abs_tol;
    r.strongly_nonlinear = !*r.zero_preserving;
  }
  r.zero_limit = zero_limit;
  const bool degree_one = r.vertical.homogeneous() && r.vertical.degree == 1.0 &&
                          r.vertical.kind != HomogeneityKind::Positive;
  r.linear = degree_one && additivity <= spec.tolerance;
  r.symmetric = r.vertical.verdict == HomogeneityVerdict::ZeroField || symmetry <= spec.tolerance;
  return r;
}

}  // namespace sode
