#pragma once

// Finsler and pseudoFinsler structures given by a basic function L(x, y):
// vertical Hessian, geodesic coefficients, semispray and connection.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "sode/connection.hpp"
#include "sode/core.hpp"
#include "sode/flow.hpp"

namespace sode {

namespace detail {

/// Solves A x = b in place by Gaussian elimination with partial pivoting on
/// primal values. A is n x n row-major. Throws NumericalError when a pivot
/// vanishes relative to the matrix scale.
template <typename T>
void pivoted_solve(std::vector<T>& A, std::vector<T>& b, std::size_t n) {
  double scale = 0.0;
  for (const T& a : A) scale = std::max(scale, std::abs(primal(a)));
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(primal(A[r * n + col])) > std::abs(primal(A[piv * n + col]))) piv = r;
    if (!(std::abs(primal(A[piv * n + col])) > 1e-14 * scale))
      throw NumericalError("singular vertical Hessian in the geodesic-coefficient solve");
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(A[col * n + c], A[piv * n + c]);
      std::swap(b[col], b[piv]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const T f = A[r * n + col] / A[col * n + col];
      for (std::size_t c = col; c < n; ++c) A[r * n + c] -= f * A[col * n + c];
      b[r] -= f * b[col];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    T acc = b[i];
    for (std::size_t c = i + 1; c < n; ++c) acc -= A[i * n + c] * b[c];
    b[i] = acc / A[i * n + i];
  }
}

}  // namespace detail

enum class CausalType { Timelike, Spacelike, Null };
std::string to_string(CausalType c);

/// Which sign of L is called timelike.
enum class SignatureConvention { NegativeTimelike, PositiveTimelike };

struct H2Check {
  double max_residual = 0.0;
  std::size_t samples = 0;
  bool ok = false;
};

class FinslerStructure {
 public:
  FinslerStructure(Expression L, std::size_t n, DomainKind domain = DomainKind::ZeroSectionExcluded);
  static FinslerStructure parse(std::string_view L, std::size_t n,
                                DomainKind domain = DomainKind::ZeroSectionExcluded);

  std::size_t dim() const noexcept { return n_; }
  DomainKind domain() const noexcept { return domain_; }
  const Expression& basic_function() const noexcept { return L_; }

  double value(std::span<const double> x, std::span<const double> y) const;

  /// L(x, a y) = a^2 L(x, y) for a in {+-2, +-0.5} on samples (relative 1e-8).
  H2Check check_h2(const SampleSpec& spec = {}) const;

  /// g_ij = (1/2) d^2 L / dy^i dy^j, symmetrized. Throws NumericalError when
  /// the condition number exceeds 1e12.
  Eigen::MatrixXd vertical_hessian(std::span<const double> x, std::span<const double> y) const;

  /// Returns -G with G^i = (1/2) g^il [d^2L/dx^k dy^l y^k - dL/dx^l].
  Vec geodesic_coefficients(std::span<const double> x, std::span<const double> y) const;

  /// Same on any scalar type whose second lift is supported by the
  /// expression evaluator; no condition check.
  template <typename T>
  void geodesic_coefficients(std::span<const T> x, std::span<const T> y, std::span<T> out) const;

 private:
  void check_point(std::span<const double> x, std::span<const double> y) const;

  Expression L_;
  std::size_t n_;
  DomainKind domain_;
};

/// S = -G as a model; evaluable at scalar depth up to kMaxModelDepth - 2.
class FinslerSprayModel final : public FieldModelImpl<FinslerSprayModel> {
 public:
  explicit FinslerSprayModel(FinslerStructure f) : f_(std::move(f)) {}
  std::size_t dim() const override { return f_.dim(); }
  std::size_t outputs() const override { return f_.dim(); }

  template <typename T>
  void evaluate(std::span<const T> x, std::span<const T> y, std::span<T> out) const {
    if constexpr (dual_depth<T>::value + 2 > kMaxModelDepth) {
      raise_depth_exceeded("Finsler geodesic coefficients");
    } else {
      f_.geodesic_coefficients<T>(x, y, out);
    }
  }

 private:
  FinslerStructure f_;
};

SodeField finsler_semispray(const FinslerStructure& f);
ConnectionField finsler_connection(const FinslerStructure& f, ConnectionMode mode = ConnectionMode::FcncVerbatim,
                                   const SampleSpec& spec = {});

CausalType causal_type(const FinslerStructure& f, std::span<const double> x, std::span<const double> y,
                       double tol = 1e-12, SignatureConvention conv = SignatureConvention::NegativeTimelike);

/// sqrt|L| along the curve, integrated over [t0, t1] by composite Simpson.
double finsler_length(const FinslerStructure& f, const Curve& c, double t0, double t1, std::size_t intervals = 256);

// ---------------------------------------------------------------------------

template <typename T>
void FinslerStructure::geodesic_coefficients(std::span<const T> x, std::span<const T> y, std::span<T> out) const {
  using H = Dual<Dual<T>>;
  const std::size_t n = n_;
  std::vector<H> xh(n), yh(n);
  auto reset = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      xh[i] = H{Dual<T>{x[i], T(0.0)}, Dual<T>{T(0.0), T(0.0)}};
      yh[i] = H{Dual<T>{y[i], T(0.0)}, Dual<T>{T(0.0), T(0.0)}};
    }
  };
  std::vector<T> g(n * n), rhs(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      reset();
      yh[i].v.d = T(1.0);
      yh[j].d.v = T(1.0);
      const H v = L_.eval<H>(std::span<const H>(xh), std::span<const H>(yh));
      g[i * n + j] = g[j * n + i] = T(0.5) * v.d.d;
    }
  }
  for (std::size_t l = 0; l < n; ++l) {
    // Inner tangent d/dy^l, outer tangent along dx = y.
    reset();
    yh[l].v.d = T(1.0);
    for (std::size_t k = 0; k < n; ++k) xh[k].d.v = y[k];
    const H v = L_.eval<H>(std::span<const H>(xh), std::span<const H>(yh));
    reset();
    xh[l].v.d = T(1.0);
    const H w = L_.eval<H>(std::span<const H>(xh), std::span<const H>(yh));
    rhs[l] = v.d.d - w.v.d;
  }
  detail::pivoted_solve(g, rhs, n);
  for (std::size_t i = 0; i < n; ++i) out[i] = T(-0.5) * rhs[i];
}

}  // namespace sode
