#pragma once

// Generalized exponential maps exp^eps_p(v) = c(eps) of a SODE, their
// eps-domains, finite-difference Jacobians, a-parameter curves and plumes.

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "sode/flow.hpp"

namespace sode {

/// eps lies outside the maximal interval of the geodesic through (p, v).
class EpsOutsideDomain : public DomainError {
 public:
  EpsOutsideDomain(const std::string& what, IntervalBound bound) : DomainError(what), bound_(bound) {}
  const IntervalBound& bound() const noexcept { return bound_; }

 private:
  IntervalBound bound_;
};

/// exp at v = 0 on a field that excludes the zero section is defined to be p.
bool is_convention_point(const SodeField& s, std::span<const double> v);

Vec exp_map(const SodeField& s, std::span<const double> p, std::span<const double> v, double eps,
            const FlowOptions& opt = {});

struct ExpDomainEstimate {
  Vec p;
  Vec v;
  MaximalIntervalEstimate interval;
  bool convention_point = false;

  /// True when eps lies strictly inside the estimated interval, or is 0.
  bool contains(double eps) const noexcept;
};

ExpDomainEstimate eps_domain(const SodeField& s, std::span<const double> p, std::span<const double> v,
                             double horizon, const FlowOptions& opt = {});

struct ExpJacobian {
  Eigen::MatrixXd matrix;
  double determinant = 0.0;
  double condition = 0.0;  // ratio of extreme singular values; +inf when singular
  double step = 0.0;
};

/// Central differences in v; every stencil point is integrated on the step
/// mesh of the base geodesic. h <= 0 selects 1e-5 * max(1, ||v||_inf).
ExpJacobian exp_jacobian(const SodeField& s, std::span<const double> p, std::span<const double> v, double eps,
                         double h = 0.0, const FlowOptions& opt = {});

struct ACurve {
  std::vector<double> a;      // grid values actually evaluated
  std::vector<Vec> points;    // exp^eps_p(a v)
  double residual = 0.0;      // max ||x''(a) - S(x, x')|| over points where the stencil fits
  std::size_t residual_points = 0;
  std::vector<std::string> errors;
  bool truncated = false;
};

ACurve a_curve(const SodeField& s, std::span<const double> p, std::span<const double> v, double eps,
               std::span<const double> a_grid, const FlowOptions& opt = {});

struct PlumeSpec {
  std::vector<Vec> directions;
  std::vector<double> a_grid;
  std::vector<double> eps_grid;      // sampling of each geodesic
  std::vector<double> a_curve_eps;   // eps values at which a-curves are drawn
  FlowOptions flow = FlowOptions::with_tolerances(1e-13, 1e-12);

  /// 0 < eps < 3, a = 0.05..1 step 0.05, three unit directions.
  static PlumeSpec figure_defaults(std::size_t n);
};

struct PlumeGeodesic {
  std::size_t direction = 0;
  double a = 0.0;
  std::vector<std::optional<Vec>> points;  // one per eps_grid entry
  std::string error;
};

struct PlumeACurve {
  std::size_t direction = 0;
  double eps = 0.0;
  std::vector<std::optional<Vec>> points;  // one per a_grid entry
  std::vector<std::string> errors;
};

struct PlumeData {
  Vec p;
  PlumeSpec spec;
  std::vector<PlumeGeodesic> geodesics;  // direction-major, then a
  std::vector<PlumeACurve> a_curves;     // a_curve_eps-major, then direction
  double consistency = 0.0;              // max gap between the two slicings
  std::size_t consistency_nodes = 0;
};

PlumeData plume(const SodeField& s, std::span<const double> p, const PlumeSpec& spec);

struct ConjugateBracket {
  double lo = 0.0;
  double hi = 0.0;
  double det_lo = 0.0;
  double det_hi = 0.0;
  bool small_determinant = false;  // flagged by magnitude rather than sign change
};

/// Scans det(exp_jacobian) over the grid and refines sign changes by
/// bisection to width 1e-4.
std::vector<ConjugateBracket> conjugate_scan(const SodeField& s, std::span<const double> p,
                                             std::span<const double> v, std::span<const double> eps_grid,
                                             const FlowOptions& opt = {}, double small = 1e-10);

/// lo, lo+step, ..., up to hi (inclusive within 1e-9 * step).
std::vector<double> linspace_step(double lo, double hi, double step);

}  // namespace sode
