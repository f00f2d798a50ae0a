#pragma once

// Geodesic flows of a SODE: x'' = S(x, x') integrated as the first-order
// system (x, y)' = (y, S(x, y)) with an embedded Runge-Kutta 5(4) pair.

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sode/core.hpp"

namespace sode {

enum class Termination { Reached, BlowUp, StepUnderflow, LeftChartBox };
std::string to_string(Termination t);

struct FlowOptions {
  double atol = 1e-10;
  double rtol = 1e-8;
  double blowup = 1e8;       // ||y||_inf threshold
  double underflow = 1e-12;  // relative to max(1, |t|)
  std::optional<Box> chart;
  std::size_t max_steps = 2'000'000;
  double max_step = std::numeric_limits<double>::infinity();
  /// Steps are also rejected when the dense output misses the equation at
  /// the quarter points of the step by more than this times max(1, ||S||_inf);
  /// 0 disables.
  double dense_residual = 1e-8;

  static FlowOptions with_tolerances(double atol, double rtol) {
    FlowOptions o;
    o.atol = atol;
    o.rtol = rtol;
    return o;
  }
};

/// Position, velocity and acceleration of a curve at one parameter value.
struct CurveJet {
  Vec x;
  Vec v;
  Vec a;
};

using Curve = std::function<CurveJet(double)>;

/// An integral curve sampled at the accepted steps, with a piecewise
/// Hermite interpolant matching x, x', x'' (and x''' when known) at nodes.
class Trajectory {
 public:
  Trajectory() = default;

  /// Builds a trajectory from nodes sorted by strictly increasing t. `jerk`
  /// may be empty, in which case a quintic interpolant is used.
  static Trajectory from_nodes(std::vector<double> t, std::vector<Vec> x, std::vector<Vec> y,
                               std::vector<Vec> acc, std::vector<Vec> jerk = {});

  std::size_t dim() const noexcept { return x_.empty() ? 0 : x_.front().size(); }
  std::size_t size() const noexcept { return t_.size(); }
  const std::vector<double>& times() const noexcept { return t_; }
  const Vec& node_x(std::size_t i) const { return x_[i]; }
  const Vec& node_y(std::size_t i) const { return y_[i]; }

  double t_start() const noexcept { return t_start_; }
  double t_min() const noexcept { return t_.front(); }
  double t_max() const noexcept { return t_.back(); }
  /// Far end of the integration (t_max when forward, t_min when backward).
  double t_end() const noexcept { return backward_ ? t_min() : t_max(); }
  bool backward() const noexcept { return backward_; }
  Termination cause() const noexcept { return cause_; }
  std::size_t rejected_steps() const noexcept { return rejected_; }

  /// Dense evaluation; throws DomainError outside [t_min, t_max].
  CurveJet jet(double t) const;
  Vec position(double t) const { return jet(t).x; }
  Vec velocity(double t) const { return jet(t).v; }
  TangentPoint state(double t) const {
    auto j = jet(t);
    return TangentPoint(std::move(j.x), std::move(j.v));
  }
  TangentPoint final_state() const;

  /// Accepted step boundaries in integration order, starting at t_start.
  std::vector<double> mesh() const;

 private:
  friend Trajectory integrate(const SodeField&, const TangentPoint&, double, double, const FlowOptions&);
  std::vector<double> t_;
  std::vector<Vec> x_, y_, a_, j_;
  double t_start_ = 0.0;
  bool backward_ = false;
  Termination cause_ = Termination::Reached;
  std::size_t rejected_ = 0;
};

/// Integrates from (t0, init) toward t1 (t1 < t0 integrates backward).
/// Throws ValidationError when init is outside the field's domain or chart
/// and DomainError when S cannot be evaluated at init.
Trajectory integrate(const SodeField& s, const TangentPoint& init, double t0, double t1,
                     const FlowOptions& opt = {});

/// Takes exactly the given steps (no error control) and returns the state at
/// mesh.back(). Used for finite-difference stencils that must see a smooth
/// map of the initial data. Throws DomainError on evaluation failure or when
/// ||y|| crosses `blowup`.
TangentPoint integrate_on_mesh(const SodeField& s, const TangentPoint& init, std::span<const double> mesh,
                               double blowup = 1e8);

enum class BoundTag { VerifiedFinite, ExceededHorizon, Truncated };
std::string to_string(BoundTag t);

/// One end of a maximal interval.
struct IntervalBound {
  double value = 0.0;
  BoundTag tag = BoundTag::ExceededHorizon;
  Termination cause = Termination::Reached;
};

struct MaximalIntervalEstimate {
  IntervalBound lower;
  IntervalBound upper;
};

enum class Direction { Forward, Backward };

/// Integrates until blow-up, step underflow, chart exit, or |t| = horizon.
/// A blow-up bound is refined by bisection on the dense output to the
/// parameter where ||y||_inf reaches the threshold.
IntervalBound escape_time(const SodeField& s, const TangentPoint& init, Direction dir, double horizon,
                          const FlowOptions& opt = {});

MaximalIntervalEstimate maximal_interval(const SodeField& s, const TangentPoint& init, double horizon,
                                         const FlowOptions& opt = {});

/// max over probe times of ||c''(t) - S(c(t), c'(t))||_inf.
double geodesic_residual(const SodeField& s, const Trajectory& tr, std::span<const double> probe_times);
double geodesic_residual(const SodeField& s, const Curve& c, std::span<const double> probe_times);

/// Evenly spaced interior times of the trajectory (excluding both ends).
std::vector<double> interior_times(const Trajectory& tr, std::size_t count);

}  // namespace sode
