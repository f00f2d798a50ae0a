#pragma once

// Forward-mode dual numbers. Nesting gives higher mixed derivatives:
// Dual<Dual<double>> is a hyper-dual number carrying f, f_a, f_b and f_ab.

#include <cmath>
#include <type_traits>

namespace sode {

template <typename T>
struct Dual {
  T v{};  // value
  T d{};  // tangent

  constexpr Dual() = default;
  constexpr Dual(double c) : v(c), d(0.0) {}  // NOLINT: implicit lift of constants
  constexpr Dual(T value, T tangent) : v(value), d(tangent) {}
};

using D1 = Dual<double>;
using D2 = Dual<D1>;
using D3 = Dual<D2>;
using D4 = Dual<D3>;

template <typename T>
struct is_dual : std::false_type {};
template <typename T>
struct is_dual<Dual<T>> : std::true_type {};

/// Number of nested tangent levels (0 for double).
template <typename T>
struct dual_depth : std::integral_constant<int, 0> {};
template <typename T>
struct dual_depth<Dual<T>> : std::integral_constant<int, 1 + dual_depth<T>::value> {};

inline constexpr double primal(double x) { return x; }
template <typename T>
constexpr double primal(const Dual<T>& x) {
  return primal(x.v);
}

inline bool all_finite(double x) { return std::isfinite(x); }
template <typename T>
bool all_finite(const Dual<T>& x) {
  return all_finite(x.v) && all_finite(x.d);
}

/// Seed a variable: value x with unit tangent.
template <typename T>
constexpr Dual<T> seed(const T& x) {
  return Dual<T>{x, T(1.0)};
}

/// Lift without tangent.
template <typename T>
constexpr Dual<T> lift(const T& x) {
  return Dual<T>{x, T(0.0)};
}

// ---- arithmetic -----------------------------------------------------------

template <typename T>
constexpr Dual<T> operator-(const Dual<T>& a) {
  return {-a.v, -a.d};
}
template <typename T>
constexpr Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  return {a.v + b.v, a.d + b.d};
}
template <typename T>
constexpr Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  return {a.v - b.v, a.d - b.d};
}
template <typename T>
constexpr Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.v * b.v, a.d * b.v + a.v * b.d};
}
template <typename T>
constexpr Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  T q = a.v / b.v;
  return {q, (a.d - q * b.d) / b.v};
}

template <typename T>
constexpr Dual<T> operator+(const Dual<T>& a, double b) {
  return {a.v + b, a.d};
}
template <typename T>
constexpr Dual<T> operator+(double a, const Dual<T>& b) {
  return {a + b.v, b.d};
}
template <typename T>
constexpr Dual<T> operator-(const Dual<T>& a, double b) {
  return {a.v - b, a.d};
}
template <typename T>
constexpr Dual<T> operator-(double a, const Dual<T>& b) {
  return {a - b.v, -b.d};
}
template <typename T>
constexpr Dual<T> operator*(const Dual<T>& a, double b) {
  return {a.v * b, a.d * b};
}
template <typename T>
constexpr Dual<T> operator*(double a, const Dual<T>& b) {
  return {a * b.v, a * b.d};
}
template <typename T>
constexpr Dual<T> operator/(const Dual<T>& a, double b) {
  return {a.v / b, a.d / b};
}
template <typename T>
constexpr Dual<T> operator/(double a, const Dual<T>& b) {
  T q = a / b.v;
  return {q, -q * b.d / b.v};
}

template <typename T>
Dual<T>& operator+=(Dual<T>& a, const Dual<T>& b) {
  a.v += b.v;
  a.d += b.d;
  return a;
}
template <typename T>
Dual<T>& operator-=(Dual<T>& a, const Dual<T>& b) {
  a.v -= b.v;
  a.d -= b.d;
  return a;
}
template <typename T>
Dual<T>& operator*=(Dual<T>& a, const Dual<T>& b) {
  a = a * b;
  return a;
}

// ---- elementary functions -------------------------------------------------

using std::abs;
using std::atan;
using std::cos;
using std::exp;
using std::log;
using std::pow;
using std::sin;
using std::sqrt;
using std::tan;
using std::tanh;

template <typename T>
Dual<T> sin(const Dual<T>& a) {
  return {sin(a.v), cos(a.v) * a.d};
}
template <typename T>
Dual<T> cos(const Dual<T>& a) {
  return {cos(a.v), -sin(a.v) * a.d};
}
template <typename T>
Dual<T> tan(const Dual<T>& a) {
  T t = tan(a.v);
  return {t, (1.0 + t * t) * a.d};
}
template <typename T>
Dual<T> exp(const Dual<T>& a) {
  T e = exp(a.v);
  return {e, e * a.d};
}
template <typename T>
Dual<T> log(const Dual<T>& a) {
  return {log(a.v), a.d / a.v};
}
template <typename T>
Dual<T> sqrt(const Dual<T>& a) {
  T s = sqrt(a.v);
  return {s, a.d / (2.0 * s)};
}
template <typename T>
Dual<T> atan(const Dual<T>& a) {
  return {atan(a.v), a.d / (1.0 + a.v * a.v)};
}
template <typename T>
Dual<T> tanh(const Dual<T>& a) {
  T t = tanh(a.v);
  return {t, (1.0 - t * t) * a.d};
}

/// |a| with subgradient 0 at the kink.
template <typename T>
Dual<T> abs(const Dual<T>& a) {
  double p = primal(a);
  if (p > 0.0) return a;
  if (p < 0.0) return -a;
  return Dual<T>{abs(a.v), T(0.0)};
}

/// a^c for a constant real exponent.
template <typename T>
Dual<T> pow(const Dual<T>& a, double c) {
  if (c == 0.0) return Dual<T>(1.0);
  if (c == 1.0) return a;
  return {pow(a.v, c), c * pow(a.v, c - 1.0) * a.d};
}

/// a^b with both arguments carrying tangents; requires a > 0.
template <typename T>
Dual<T> pow(const Dual<T>& a, const Dual<T>& b) {
  return exp(b * log(a));
}

}  // namespace sode
