#include "sode/finsler.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sode {

std::string to_string(CausalType c) {
  switch (c) {
    case CausalType::Timelike: return "timelike";
    case CausalType::Spacelike: return "spacelike";
    case CausalType::Null: return "null";
  }
  return "null";
}

FinslerStructure::FinslerStructure(Expression L, std::size_t n, DomainKind domain)
    : L_(std::move(L)), n_(n), domain_(domain) {
  if (n_ == 0) throw ValidationError("Finsler structure needs n > 0");
  if (static_cast<std::size_t>(std::max(L_.max_x_index(), L_.max_y_index())) > n_)
    throw ValidationError("basic function '" + L_.str() + "' references a coordinate beyond dimension " +
                          std::to_string(n_));
}

FinslerStructure FinslerStructure::parse(std::string_view L, std::size_t n, DomainKind domain) {
  return FinslerStructure(Expression::parse(L, n), n, domain);
}

void FinslerStructure::check_point(std::span<const double> x, std::span<const double> y) const {
  if (x.size() != n_ || y.size() != n_)
    throw ValidationError("Finsler evaluation: expected dimension " + std::to_string(n_));
  if (domain_ == DomainKind::ZeroSectionExcluded && std::all_of(y.begin(), y.end(), [](double c) { return c == 0.0; }))
    throw ValidationError("the basic function is only smooth off the zero section; y must be nonzero");
}

double FinslerStructure::value(std::span<const double> x, std::span<const double> y) const {
  if (x.size() != n_ || y.size() != n_)
    throw ValidationError("Finsler evaluation: expected dimension " + std::to_string(n_));
  return L_.eval<double>(x, y);
}

H2Check FinslerStructure::check_h2(const SampleSpec& spec) const {
  H2Check r;
  constexpr double scalars[] = {2.0, -2.0, 0.5, -0.5};
  double scale = 0.0;
  std::vector<std::pair<TangentPoint, double>> base;
  for (auto& p : sample_points(n_, spec, true)) {
    try {
      const double l = value(p.x, p.y);
      scale = std::max(scale, std::abs(l));
      base.emplace_back(std::move(p), l);
    } catch (const DomainError&) {
    }
  }
  const double floor = 1e-12 * std::max(scale, 1e-300);
  for (const auto& [p, l] : base) {
    try {
      for (double a : scalars) {
        Vec ay = p.y;
        for (double& c : ay) c *= a;
        const double la = value(p.x, ay);
        const double den = std::max({std::abs(a * a * l), std::abs(la), floor});
        r.max_residual = std::max(r.max_residual, std::abs(la - a * a * l) / den);
      }
      ++r.samples;
    } catch (const DomainError&) {
    }
  }
  r.ok = r.samples > 0 && r.max_residual <= spec.tolerance;
  return r;
}

Eigen::MatrixXd FinslerStructure::vertical_hessian(std::span<const double> x, std::span<const double> y) const {
  check_point(x, y);
  const std::size_t n = n_;
  std::vector<D2> xh(n), yh(n);
  Eigen::MatrixXd g(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) {
        xh[k] = D2{D1{x[k], 0.0}, D1{0.0, 0.0}};
        yh[k] = D2{D1{y[k], 0.0}, D1{0.0, 0.0}};
      }
      yh[i].v.d = 1.0;
      yh[j].d.v = 1.0;
      const D2 v = L_.eval<D2>(std::span<const D2>(xh), std::span<const D2>(yh));
      g(i, j) = g(j, i) = 0.5 * v.d.d;
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(g);
  const auto& sv = svd.singularValues();
  const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
  if (!(cond <= 1e12)) {
    std::ostringstream os;
    os << "degenerate vertical Hessian (condition number " << cond
       << "); the basic function must have a nondegenerate vertical Hessian";
    throw NumericalError(os.str());
  }
  return g;
}

Vec FinslerStructure::geodesic_coefficients(std::span<const double> x, std::span<const double> y) const {
  vertical_hessian(x, y);  // nondegeneracy check
  Vec out(n_);
  geodesic_coefficients<double>(x, y, std::span<double>(out));
  return out;
}

SodeField finsler_semispray(const FinslerStructure& f) {
  return SodeField(std::make_shared<FinslerSprayModel>(f), f.domain(),
                   "Finsler semispray of L = " + f.basic_function().str());
}

ConnectionField finsler_connection(const FinslerStructure& f, ConnectionMode mode, const SampleSpec& spec) {
  return connection_from_spray(finsler_semispray(f), mode, spec);
}

CausalType causal_type(const FinslerStructure& f, std::span<const double> x, std::span<const double> y, double tol,
                       SignatureConvention conv) {
  const double l = f.value(x, y);
  if (std::abs(l) <= tol) return CausalType::Null;
  const bool negative = l < 0.0;
  const bool timelike = conv == SignatureConvention::NegativeTimelike ? negative : !negative;
  return timelike ? CausalType::Timelike : CausalType::Spacelike;
}

double finsler_length(const FinslerStructure& f, const Curve& c, double t0, double t1, std::size_t intervals) {
  if (intervals < 2) intervals = 2;
  if (intervals % 2) ++intervals;
  const double h = (t1 - t0) / static_cast<double>(intervals);
  double acc = 0.0;
  for (std::size_t i = 0; i <= intervals; ++i) {
    const CurveJet j = c(t0 + h * static_cast<double>(i));
    const double w = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * std::sqrt(std::abs(f.value(j.x, j.v)));
  }
  return acc * h / 3.0;
}

}  // namespace sode
