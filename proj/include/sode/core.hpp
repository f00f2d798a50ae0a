#pragma once

// Chart-level geometry of TM and TTM: points, SODE and connection fields,
// the canonical maps J, K and the vertical lift, and homogeneity
// classification of coefficient families.

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sode/dual.hpp"
#include "sode/errors.hpp"
#include "sode/expr.hpp"

namespace sode {

using Vec = std::vector<double>;

enum class DomainKind { WholeBundle, ZeroSectionExcluded };

std::string to_string(DomainKind d);

/// A point (x, y) of TM.
struct TangentPoint {
  Vec x;
  Vec y;

  TangentPoint() = default;
  TangentPoint(Vec base, Vec fiber);
  std::size_t dim() const noexcept { return x.size(); }
  bool on_zero_section() const noexcept;
};

/// A point (x, y, X, Y) of TTM.
struct DoubleTangent {
  Vec x;
  Vec y;
  Vec X;
  Vec Y;

  DoubleTangent() = default;
  DoubleTangent(Vec x, Vec y, Vec X, Vec Y);
  std::size_t dim() const noexcept { return x.size(); }

  /// Member of fix J: X = y componentwise.
  bool in_fix_j(double tol = 0.0) const noexcept;
  /// Member of the vertical bundle: X = 0.
  bool is_vertical(double tol = 0.0) const noexcept;

  TangentPoint pi_T() const { return {x, y}; }
  TangentPoint pi_star() const { return {x, X}; }
};

/// J(x, y, X, Y) = (x, X, y, Y).
DoubleTangent canonical_involution(const DoubleTangent& z);

/// K : V -> TM, (x, y, 0, Y) -> (x, Y). Throws ValidationError when
/// ||X||_inf exceeds `tol`.
TangentPoint vertical_connector_K(const DoubleTangent& z, double tol = 1e-12);

/// The vertical lift at v = (x, y) of w: (x, y, 0, w).
DoubleTangent vertical_lift(const TangentPoint& v, std::span<const double> w);

// ---------------------------------------------------------------------------
// Field models: vector-valued functions of (x, y) evaluable on doubles and on
// nested dual numbers up to depth 4.

class FieldModel {
 public:
  virtual ~FieldModel() = default;
  virtual std::size_t dim() const = 0;
  virtual std::size_t outputs() const = 0;

  virtual void eval(std::span<const double> x, std::span<const double> y, std::span<double> out) const = 0;
  virtual void eval(std::span<const D1> x, std::span<const D1> y, std::span<D1> out) const = 0;
  virtual void eval(std::span<const D2> x, std::span<const D2> y, std::span<D2> out) const = 0;
  virtual void eval(std::span<const D3> x, std::span<const D3> y, std::span<D3> out) const = 0;
  virtual void eval(std::span<const D4> x, std::span<const D4> y, std::span<D4> out) const = 0;
};

/// Maximum dual depth a FieldModel can be evaluated at.
inline constexpr int kMaxModelDepth = 4;

/// CRTP adapter: Derived provides `template <typename T> void evaluate(...)`.
template <typename Derived>
class FieldModelImpl : public FieldModel {
 public:
  void eval(std::span<const double> x, std::span<const double> y, std::span<double> out) const override {
    self().evaluate(x, y, out);
  }
  void eval(std::span<const D1> x, std::span<const D1> y, std::span<D1> out) const override {
    self().evaluate(x, y, out);
  }
  void eval(std::span<const D2> x, std::span<const D2> y, std::span<D2> out) const override {
    self().evaluate(x, y, out);
  }
  void eval(std::span<const D3> x, std::span<const D3> y, std::span<D3> out) const override {
    self().evaluate(x, y, out);
  }
  void eval(std::span<const D4> x, std::span<const D4> y, std::span<D4> out) const override {
    self().evaluate(x, y, out);
  }

 private:
  const Derived& self() const { return static_cast<const Derived&>(*this); }
};

[[noreturn]] void raise_depth_exceeded(const char* who);

/// Outputs given by expressions.
class ExpressionModel final : public FieldModelImpl<ExpressionModel> {
 public:
  ExpressionModel(std::size_t dim, std::vector<Expression> components);
  std::size_t dim() const override { return dim_; }
  std::size_t outputs() const override { return components_.size(); }
  const std::vector<Expression>& components() const noexcept { return components_; }

  template <typename T>
  void evaluate(std::span<const T> x, std::span<const T> y, std::span<T> out) const {
    for (std::size_t k = 0; k < components_.size(); ++k) out[k] = components_[k].eval<T>(x, y);
  }

 private:
  std::size_t dim_;
  std::vector<Expression> components_;
};

/// scale * d(base)/dy as an n x n block (row k, column j), base with n outputs.
class FiberJacobianModel final : public FieldModelImpl<FiberJacobianModel> {
 public:
  FiberJacobianModel(std::shared_ptr<const FieldModel> base, double scale);
  std::size_t dim() const override { return base_->dim(); }
  std::size_t outputs() const override { return base_->dim() * base_->dim(); }

  template <typename T>
  void evaluate(std::span<const T> x, std::span<const T> y, std::span<T> out) const {
    if constexpr (dual_depth<T>::value >= kMaxModelDepth) {
      raise_depth_exceeded("fiber Jacobian");
    } else {
      const std::size_t n = dim();
      std::vector<Dual<T>> xd(n), yd(n), fd(n);
      for (std::size_t i = 0; i < n; ++i) xd[i] = lift(x[i]);
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) yd[i] = lift(y[i]);
        yd[j].d = T(1.0);
        base_->eval(std::span<const Dual<T>>(xd), std::span<const Dual<T>>(yd), std::span<Dual<T>>(fd));
        for (std::size_t k = 0; k < n; ++k) out[k * n + j] = scale_ * fd[k].d;
      }
    }
  }

 private:
  std::shared_ptr<const FieldModel> base_;
  double scale_;
};

/// S^k = G^k_i(x, y) y^i for an n x n coefficient model G.
class ContractionModel final : public FieldModelImpl<ContractionModel> {
 public:
  explicit ContractionModel(std::shared_ptr<const FieldModel> coefficients);
  std::size_t dim() const override { return coeffs_->dim(); }
  std::size_t outputs() const override { return coeffs_->dim(); }

  template <typename T>
  void evaluate(std::span<const T> x, std::span<const T> y, std::span<T> out) const {
    const std::size_t n = dim();
    std::vector<T> g(n * n);
    coeffs_->eval(x, y, std::span<T>(g));
    for (std::size_t k = 0; k < n; ++k) {
      T acc(0.0);
      for (std::size_t i = 0; i < n; ++i) acc += g[k * n + i] * y[i];
      out[k] = acc;
    }
  }

 private:
  std::shared_ptr<const FieldModel> coeffs_;
};

/// Pointwise sum of two models with equal shapes.
class SumModel final : public FieldModelImpl<SumModel> {
 public:
  SumModel(std::shared_ptr<const FieldModel> a, std::shared_ptr<const FieldModel> b);
  std::size_t dim() const override { return a_->dim(); }
  std::size_t outputs() const override { return a_->outputs(); }

  template <typename T>
  void evaluate(std::span<const T> x, std::span<const T> y, std::span<T> out) const {
    std::vector<T> tmp(out.size());
    a_->eval(x, y, out);
    b_->eval(x, y, std::span<T>(tmp));
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += tmp[k];
  }

 private:
  std::shared_ptr<const FieldModel> a_;
  std::shared_ptr<const FieldModel> b_;
};

// ---------------------------------------------------------------------------

enum class HomogeneityKind { Complete, Projective, Positive, None };
std::string to_string(HomogeneityKind k);

/// Local form (x, y) -> (x, y, y, S(x, y)) of a second-order differential
/// equation on TM (or on TM - 0).
class SodeField {
 public:
  SodeField(std::vector<Expression> coefficients, DomainKind domain = DomainKind::WholeBundle);
  SodeField(std::shared_ptr<const FieldModel> model, DomainKind domain, std::string description);

  std::size_t dim() const noexcept { return model_->dim(); }
  DomainKind domain() const noexcept { return domain_; }
  bool excludes_zero_section() const noexcept { return domain_ == DomainKind::ZeroSectionExcluded; }

  /// Coefficient expressions when the field is given symbolically.
  const std::optional<std::vector<Expression>>& expressions() const noexcept { return exprs_; }
  const FieldModel& model() const noexcept { return *model_; }
  const std::shared_ptr<const FieldModel>& model_ptr() const noexcept { return model_; }
  const std::string& description() const noexcept { return description_; }

  std::optional<double> declared_degree;
  std::optional<HomogeneityKind> declared_kind;

  /// S(x, y); throws ValidationError for y = 0 on a zero-section-excluded
  /// field and DomainError when a coefficient cannot be evaluated.
  Vec operator()(std::span<const double> x, std::span<const double> y) const;
  void eval_into(std::span<const double> x, std::span<const double> y, std::span<double> out) const {
    model_->eval(x, y, out);
  }
  template <typename T>
  void eval(std::span<const T> x, std::span<const T> y, std::span<T> out) const {
    model_->eval(x, y, out);
  }

  /// The section value (x, y, y, S(x, y)), a point of fix J.
  DoubleTangent section(const TangentPoint& v) const;

  void check_in_domain(const TangentPoint& v) const;

 private:
  std::shared_ptr<const FieldModel> model_;
  DomainKind domain_;
  std::optional<std::vector<Expression>> exprs_;
  std::string description_;
};

/// Generalized connection coefficients G^k_i(x, y), row k, column i.
class ConnectionField {
 public:
  /// Row-major n x n expressions.
  ConnectionField(std::size_t n, std::vector<Expression> coefficients,
                  DomainKind domain = DomainKind::WholeBundle);
  ConnectionField(std::shared_ptr<const FieldModel> model, DomainKind domain, std::string description);

  std::size_t dim() const noexcept { return model_->dim(); }
  DomainKind domain() const noexcept { return domain_; }
  bool excludes_zero_section() const noexcept { return domain_ == DomainKind::ZeroSectionExcluded; }
  const std::optional<std::vector<Expression>>& expressions() const noexcept { return exprs_; }
  const FieldModel& model() const noexcept { return *model_; }
  const std::shared_ptr<const FieldModel>& model_ptr() const noexcept { return model_; }
  const std::string& description() const noexcept { return description_; }

  Eigen::MatrixXd operator()(std::span<const double> x, std::span<const double> y) const;
  template <typename T>
  void eval(std::span<const T> x, std::span<const T> y, std::span<T> out) const {
    model_->eval(x, y, out);
  }

  /// Horizontal vector over (x, y) projecting to u: (x, y, u, G(x, y) u).
  DoubleTangent horizontal(const TangentPoint& v, std::span<const double> u) const;

  /// Connector: kappa(x, y, X, Y) = (x, Y - G(x, y) X).
  TangentPoint connector(const DoubleTangent& z) const;

  void check_in_domain(const TangentPoint& v) const;

 private:
  std::shared_ptr<const FieldModel> model_;
  DomainKind domain_;
  std::optional<std::vector<Expression>> exprs_;
  std::string description_;
};

// ---------------------------------------------------------------------------
// Sampling and homogeneity classification.

struct Interval {
  double lo;
  double hi;
};

/// Axis-aligned box; one interval per axis.
struct Box {
  std::vector<Interval> axes;

  Box() = default;
  explicit Box(std::vector<Interval> a) : axes(std::move(a)) {}
  static Box cube(std::size_t n, double lo, double hi);

  std::size_t dim() const noexcept { return axes.size(); }
  bool contains(std::span<const double> p, double slack = 0.0) const noexcept;
  Vec center() const;
  /// Scaled about the center.
  Box scaled(double factor) const;
  /// Smallest box containing both.
  Box hull(const Box& other) const;
  void expand_to(std::span<const double> p);
  std::string str() const;
};

struct SampleSpec {
  std::optional<Box> x_box;  // default: [-1, 1]^n
  std::optional<Box> y_box;  // default: [-1, 1]^n
  std::size_t count = 64;
  std::uint64_t seed = 1;
  double tolerance = 1e-8;
};

/// Fixed-seed sample points (x, y); when `avoid_zero` the fibers are kept
/// away from 0 by rejection.
std::vector<TangentPoint> sample_points(std::size_t n, const SampleSpec& spec, bool avoid_zero);

enum class HomogeneityVerdict { Inhomogeneous, Homogeneous, ZeroField };

struct HomogeneityReport {
  HomogeneityVerdict verdict = HomogeneityVerdict::Inhomogeneous;
  double degree = 0.0;  // least-squares estimate
  HomogeneityKind kind = HomogeneityKind::None;
  double max_residual = 0.0;  // at the reported kind (or positive scalars when inhomogeneous)
  std::size_t samples = 0;

  bool homogeneous() const noexcept { return verdict == HomogeneityVerdict::Homogeneous; }
  std::string label(const char* prefix = "h") const;
};

/// Scalars used by the homogeneity test.
inline constexpr double kPositiveScalars[] = {0.1, 0.5, 1.5, 2.0};
inline constexpr double kNegativeScalars[] = {-2.0, -1.5, -1.0, -0.5, -0.1};

HomogeneityReport classify_homogeneity(const FieldModel& f, DomainKind domain, const SampleSpec& spec);
HomogeneityReport classify_homogeneity(const SodeField& s, const SampleSpec& spec);
/// Vertical homogeneity of the coefficient family G(x, .).
HomogeneityReport classify_homogeneity(const ConnectionField& c, const SampleSpec& spec);

struct ConnectionShapeReport {
  HomogeneityReport vertical;             // vh(m) of the coefficients
  std::optional<bool> zero_preserving;    // nullopt: zero section excluded
  std::optional<bool> strongly_nonlinear; // nullopt: zero section excluded
  bool linear = false;
  bool symmetric = false;   // J-invariant connector: G(x,y)X = G(x,X)y
  double zero_section_max = 0.0;  // max |G(x, 0)| (whole bundle only)
  double zero_limit = 0.0;        // max |G(x, 1e-6 y)| over samples
};

ConnectionShapeReport classify_connection_shape(const ConnectionField& c, const SampleSpec& spec);

}  // namespace sode
