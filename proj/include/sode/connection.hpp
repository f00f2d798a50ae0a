#pragma once

// Nonlinear connections and their SODEs: induced sprays, connections from
// sprays, covariant derivative, difference operator, torsion and curvature.
//
// Sign conventions used throughout:
//   (nabla_U V)^k = U^i d_i V^k - G^k_i(x, V) U^i
//   S^k(x, y)     = G^k_i(x, y) y^i
//   kappa(x, v, X, Y) = Y - G(x, v) X
//   D(c1, c2)(u, v)   = nabla(c1) - nabla(c2) = (G2(x, v) - G1(x, v)) u
//   T(u, v)           = 2 D(c, LC(c))(u, v)
// For a linear connection G^k_i(y) = A^k_ij y^j the classical Christoffel
// symbols are -A^k_ij.

#include <Eigen/Dense>
#include <string>
#include <string_view>
#include <vector>

#include "sode/core.hpp"
#include "sode/flow.hpp"

namespace sode {

/// A vector field on the base: n expressions in x1..xn only.
class VectorFieldSpec {
 public:
  explicit VectorFieldSpec(std::vector<Expression> components);
  static VectorFieldSpec parse(const std::vector<std::string>& components);
  /// The constant field with the given components.
  static VectorFieldSpec constant(std::span<const double> c);

  std::size_t dim() const noexcept { return comps_.size(); }
  const std::vector<Expression>& components() const noexcept { return comps_; }

  template <typename T>
  std::vector<T> eval(std::span<const T> x) const {
    std::vector<T> out(comps_.size());
    for (std::size_t k = 0; k < comps_.size(); ++k) out[k] = comps_[k].eval<T>(x, std::span<const T>());
    return out;
  }
  Vec operator()(std::span<const double> x) const { return eval<double>(x); }

 private:
  std::vector<Expression> comps_;
};

struct CompatibilityReport {
  double residual = 0.0;  // max ||G(x,y) y - S(x,y)||_inf over samples
  bool compatible = false;
  std::size_t samples = 0;
};

/// Raised when the Euler-normalized construction is asked of an
/// inhomogeneous spray; carries the fcnc-verbatim compatibility report.
class InhomogeneousSprayError : public ValidationError {
 public:
  InhomogeneousSprayError(const std::string& what, CompatibilityReport r) : ValidationError(what), report_(r) {}
  const CompatibilityReport& report() const noexcept { return report_; }

 private:
  CompatibilityReport report_;
};

enum class ConnectionMode { FcncVerbatim, EulerNormalized };
std::string to_string(ConnectionMode m);

SodeField spray_from_connection(const ConnectionField& c);

/// FcncVerbatim: G^k_j = dS^k/dy^j. EulerNormalized: (1/m) dS^k/dy^j with m
/// the declared degree, or the classified one when none is declared.
ConnectionField connection_from_spray(const SodeField& s, ConnectionMode mode, const SampleSpec& spec = {});

CompatibilityReport compatibility(const ConnectionField& c, const SodeField& s, const SampleSpec& spec = {});

Vec covariant_derivative(const ConnectionField& c, const VectorFieldSpec& U, const VectorFieldSpec& V,
                         std::span<const double> x);

Vec difference_operator(const ConnectionField& c1, const ConnectionField& c2, std::span<const double> u,
                        std::span<const double> v, std::span<const double> x);

/// The Euler-normalized connection of c's induced spray.
ConnectionField lc_reference(const ConnectionField& c, const SampleSpec& spec = {});

Vec torsion(const ConnectionField& c, std::span<const double> u, std::span<const double> v,
            std::span<const double> x, const SampleSpec& spec = {});
/// Same, against a precomputed LC reference.
Vec torsion(const ConnectionField& c, const ConnectionField& lc, std::span<const double> u,
            std::span<const double> v, std::span<const double> x);

/// R(U, V) w = kappa([V_bar, U_bar]) at (x, w), with horizontal lifts
/// U_bar(x, y) = (U(x), G(x, y) U(x)).
Vec curvature_bracket(const ConnectionField& c, const VectorFieldSpec& U, const VectorFieldSpec& V,
                      std::span<const double> w, std::span<const double> x);

/// R(U, V) W = nabla_U nabla_V W - nabla_V nabla_U W - nabla_[U,V] W.
Vec curvature_nabla(const ConnectionField& c, const VectorFieldSpec& U, const VectorFieldSpec& V,
                    const VectorFieldSpec& W, std::span<const double> x);

/// Lie bracket [U, V] = U^i d_i V - V^i d_i U at x.
Vec lie_bracket(const VectorFieldSpec& U, const VectorFieldSpec& V, std::span<const double> x);

/// max over probe times of ||c'' - G(c, c') c'||_inf, i.e. the connector
/// applied to the second lift of the curve.
double covariant_acceleration_residual(const ConnectionField& c, const Curve& curve,
                                       std::span<const double> probe_times);

}  // namespace sode
