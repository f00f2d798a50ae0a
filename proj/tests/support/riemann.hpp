#pragma once

// Classical Riemannian oracles built from a metric g(x) by finite
// differences, independent of the library's dual-number machinery.

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace sode::tsup {

using Metric = std::function<Eigen::MatrixXd(const std::vector<double>&)>;
/// chr[l](j, k) = classical Christoffel symbol of the second kind.
using Christoffel = std::vector<Eigen::MatrixXd>;
using ChristoffelField = std::function<Christoffel(const std::vector<double>&)>;

/// Fourth-order central difference of g along axis i.
inline Eigen::MatrixXd metric_derivative(const Metric& g, std::vector<double> x, std::size_t i, double h = 1e-3) {
  const double x0 = x[i];
  auto at = [&](double d) {
    x[i] = x0 + d;
    return g(x);
  };
  return (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
}

inline Christoffel christoffel(const Metric& g, const std::vector<double>& x) {
  const std::size_t n = x.size();
  const Eigen::MatrixXd ginv = g(x).inverse();
  std::vector<Eigen::MatrixXd> dg;
  for (std::size_t i = 0; i < n; ++i) dg.push_back(metric_derivative(g, x, i));
  Christoffel out(n, Eigen::MatrixXd::Zero(n, n));
  for (std::size_t l = 0; l < n; ++l)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) {
        double acc = 0.0;
        for (std::size_t m = 0; m < n; ++m)
          acc += ginv(l, m) * (dg[j](m, k) + dg[k](m, j) - dg[m](j, k));
        out[l](j, k) = 0.5 * acc;
      }
  return out;
}

/// Geodesic acceleration -chr^i_jk y^j y^k.
inline std::vector<double> christoffel_contraction(const Christoffel& chr, const std::vector<double>& y) {
  const std::size_t n = y.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) out[i] -= chr[i](j, k) * y[j] * y[k];
  return out;
}

/// R(e_i, e_j) e_k = R^l_ijk e_l with
/// R^l_ijk = d_i chr^l_jk - d_j chr^l_ik + chr^l_im chr^m_jk - chr^l_jm chr^m_ik.
inline std::vector<double> riemann(const ChristoffelField& chr, const std::vector<double>& x, std::size_t i,
                                   std::size_t j, std::size_t k, double h = 1e-4) {
  const std::size_t n = x.size();
  auto partial = [&](std::size_t axis) {
    std::vector<double> xp = x, xm = x;
    xp[axis] += h;
    xm[axis] -= h;
    const Christoffel a = chr(xp), b = chr(xm);
    Christoffel d(n, Eigen::MatrixXd::Zero(n, n));
    for (std::size_t l = 0; l < n; ++l) d[l] = (a[l] - b[l]) / (2 * h);
    return d;
  };
  const Christoffel di = partial(i), dj = partial(j), c = chr(x);
  std::vector<double> out(n, 0.0);
  for (std::size_t l = 0; l < n; ++l) {
    double r = di[l](j, k) - dj[l](i, k);
    for (std::size_t m = 0; m < n; ++m) r += c[l](i, m) * c[m](j, k) - c[l](j, m) * c[m](i, k);
    out[l] = r;
  }
  return out;
}

}  // namespace sode::tsup
