#include "sode/flow.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace sode {

std::string to_string(Termination t) {
  switch (t) {
    case Termination::Reached: return "reached";
    case Termination::BlowUp: return "blow-up";
    case Termination::StepUnderflow: return "step-underflow";
    case Termination::LeftChartBox: return "left-chart-box";
  }
  return "reached";
}

std::string to_string(BoundTag t) {
  switch (t) {
    case BoundTag::VerifiedFinite: return "verified-finite";
    case BoundTag::ExceededHorizon: return "exceeded-horizon";
    case BoundTag::Truncated: return "truncated";
  }
  return "truncated";
}

namespace {

// Dormand-Prince 5(4).
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

class System {
 public:
  explicit System(const SodeField& s) : s_(s), n_(s.dim()) {}
  std::size_t n() const { return n_; }

  void rhs(const Vec& z, Vec& out) const {
    const std::span<const double> x(z.data(), n_), y(z.data() + n_, n_);
    std::copy(y.begin(), y.end(), out.begin());
    s_.eval_into(x, y, std::span<double>(out.data() + n_, n_));
    for (std::size_t i = n_; i < 2 * n_; ++i)
      if (!std::isfinite(out[i])) throw DomainError("non-finite field value");
  }

  // d/dt S(x(t), y(t)) along the flow.
  Vec jerk(const Vec& z, const Vec& f) const {
    std::vector<D1> x(n_), y(n_), out(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      x[i] = D1{z[i], z[n_ + i]};
      y[i] = D1{z[n_ + i], f[n_ + i]};
    }
    s_.eval(std::span<const D1>(x), std::span<const D1>(y), std::span<D1>(out));
    Vec j(n_);
    for (std::size_t i = 0; i < n_; ++i) j[i] = out[i].d;
    return j;
  }

 private:
  const SodeField& s_;
  std::size_t n_;
};

struct Stages {
  Vec k[7];
  explicit Stages(std::size_t m) {
    for (auto& v : k) v.assign(m, 0.0);
  }
};

// One DP5 step from (z, f = rhs(z)) with signed step h. Returns z_new; k[6]
// holds rhs(z_new). Evaluation errors propagate.
Vec dp_step(const System& sys, const Vec& z, const Vec& f, double h, Stages& st, Vec* err) {
  const std::size_t m = z.size();
  Vec tmp(m), zn(m);
  st.k[0] = f;
  for (std::size_t i = 0; i < m; ++i) tmp[i] = z[i] + h * a21 * st.k[0][i];
  sys.rhs(tmp, st.k[1]);
  for (std::size_t i = 0; i < m; ++i) tmp[i] = z[i] + h * (a31 * st.k[0][i] + a32 * st.k[1][i]);
  sys.rhs(tmp, st.k[2]);
  for (std::size_t i = 0; i < m; ++i) tmp[i] = z[i] + h * (a41 * st.k[0][i] + a42 * st.k[1][i] + a43 * st.k[2][i]);
  sys.rhs(tmp, st.k[3]);
  for (std::size_t i = 0; i < m; ++i)
    tmp[i] = z[i] + h * (a51 * st.k[0][i] + a52 * st.k[1][i] + a53 * st.k[2][i] + a54 * st.k[3][i]);
  sys.rhs(tmp, st.k[4]);
  for (std::size_t i = 0; i < m; ++i)
    tmp[i] = z[i] + h * (a61 * st.k[0][i] + a62 * st.k[1][i] + a63 * st.k[2][i] + a64 * st.k[3][i] +
                         a65 * st.k[4][i]);
  sys.rhs(tmp, st.k[5]);
  for (std::size_t i = 0; i < m; ++i)
    zn[i] = z[i] + h * (b1 * st.k[0][i] + b3 * st.k[2][i] + b4 * st.k[3][i] + b5 * st.k[4][i] + b6 * st.k[5][i]);
  sys.rhs(zn, st.k[6]);
  if (err) {
    err->resize(m);
    for (std::size_t i = 0; i < m; ++i)
      (*err)[i] = h * (e1 * st.k[0][i] + e3 * st.k[2][i] + e4 * st.k[3][i] + e5 * st.k[4][i] + e6 * st.k[5][i] +
                       e7 * st.k[6][i]);
  }
  return zn;
}

double scaled_rms(const Vec& v, const Vec& z0, const Vec& z1, const FlowOptions& o) {
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double sc = o.atol + o.rtol * std::max(std::abs(z0[i]), std::abs(z1[i]));
    const double r = v[i] / sc;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(v.size()));
}

double initial_step(const System& sys, const Vec& z, const Vec& f, double dir, const FlowOptions& o) {
  const double d0 = scaled_rms(z, z, z, o);
  const double d1 = scaled_rms(f, z, z, o);
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  Vec z1(z.size()), f1(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) z1[i] = z[i] + dir * h0 * f[i];
  double d2 = 0.0;
  try {
    sys.rhs(z1, f1);
    Vec diff(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) diff[i] = f1[i] - f[i];
    d2 = scaled_rms(diff, z, z, o) / h0;
  } catch (const DomainError&) {
    return h0;
  }
  const double big = std::max(d1, d2);
  const double h1 = big <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / big, 1.0 / 5.0);
  // Components at zero with a tiny absolute tolerance make the estimate
  // collapse; oversized steps are cheap to reject, vanishing ones are not.
  return std::max(std::min(100.0 * h0, h1), 1e-6);
}

// Inverse of the matrix mapping the coefficients of s^r (c_0 + ... + c_{r-1} s^{r-1})
// to its value and first r-1 derivatives at s = 1.
const Eigen::MatrixXd& hermite_inverse(int r) {
  static const auto build = [](int rr) {
    Eigen::MatrixXd m(rr, rr);
    for (int i = 0; i < rr; ++i)
      for (int j = 0; j < rr; ++j) {
        double f = 1.0;
        for (int q = 0; q < i; ++q) f *= static_cast<double>(rr + j - q);
        m(i, j) = f;
      }
    return Eigen::MatrixXd(m.inverse());
  };
  static const Eigen::MatrixXd inv3 = build(3);
  static const Eigen::MatrixXd inv4 = build(4);
  return r == 3 ? inv3 : inv4;
}

struct NodeRef {
  const Vec* x;
  const Vec* y;
  const Vec* a;
  const Vec* j;  // may be null
};

// Hermite interpolant over a step of signed length h, evaluated at the
// fraction s of the step. Matches position, velocity, acceleration and, when
// both jerks are known, jerk.
CurveJet hermite(NodeRef A, NodeRef B, double h, double s) {
  const std::size_t n = A.x->size();
  const int r = (A.j && B.j) ? 4 : 3;
  const Eigen::MatrixXd& inv = hermite_inverse(r);
  CurveJet out{Vec(n), Vec(n), Vec(n)};
  double d0[4], d1[4];
  for (std::size_t k = 0; k < n; ++k) {
    d0[0] = (*A.x)[k];
    d0[1] = h * (*A.y)[k];
    d0[2] = h * h * (*A.a)[k];
    d1[0] = (*B.x)[k];
    d1[1] = h * (*B.y)[k];
    d1[2] = h * h * (*B.a)[k];
    if (r == 4) {
      d0[3] = h * h * h * (*A.j)[k];
      d1[3] = h * h * h * (*B.j)[k];
    }
    // Taylor part T(s) = sum d0[q] s^q / q!; the mismatch at s=1 fixes the tail.
    Eigen::VectorXd rhs(r);
    for (int q = 0; q < r; ++q) {
      double tq = 0.0, fact = 1.0;
      for (int p = q; p < r; ++p) {
        if (p > q) fact *= static_cast<double>(p - q);
        tq += d0[p] / fact;
      }
      rhs(q) = d1[q] - tq;
    }
    const Eigen::VectorXd c = inv * rhs;
    double coef[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    double fact = 1.0;
    for (int q = 0; q < r; ++q) {
      if (q > 0) fact *= q;
      coef[q] = d0[q] / fact;
    }
    for (int q = 0; q < r; ++q) coef[r + q] = c(q);
    double p0 = 0.0, p1 = 0.0, p2 = 0.0;
    for (int q = 2 * r - 1; q >= 0; --q) {
      p2 = p2 * s + 2.0 * p1;
      p1 = p1 * s + p0;
      p0 = p0 * s + coef[q];
    }
    out.x[k] = p0;
    out.v[k] = p1 / h;
    out.a[k] = p2 / (h * h);
  }
  return out;
}

}  // namespace

// ---- Trajectory -----------------------------------------------------------

Trajectory Trajectory::from_nodes(std::vector<double> t, std::vector<Vec> x, std::vector<Vec> y, std::vector<Vec> acc,
                                  std::vector<Vec> jerk) {
  if (t.empty()) throw ValidationError("trajectory needs at least one node");
  if (x.size() != t.size() || y.size() != t.size() || acc.size() != t.size() ||
      (!jerk.empty() && jerk.size() != t.size()))
    throw ValidationError("trajectory node arrays differ in length");
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1])) throw ValidationError("trajectory times must be strictly increasing");
  Trajectory tr;
  tr.t_ = std::move(t);
  tr.x_ = std::move(x);
  tr.y_ = std::move(y);
  tr.a_ = std::move(acc);
  tr.j_ = std::move(jerk);
  tr.t_start_ = tr.t_.front();
  return tr;
}

TangentPoint Trajectory::final_state() const {
  const std::size_t i = backward_ ? 0 : t_.size() - 1;
  return TangentPoint(x_[i], y_[i]);
}

std::vector<double> Trajectory::mesh() const {
  std::vector<double> m = t_;
  if (backward_) std::reverse(m.begin(), m.end());
  return m;
}

CurveJet Trajectory::jet(double t) const {
  if (t_.empty() || t < t_.front() || t > t_.back()) {
    std::ostringstream os;
    os.precision(17);
    os << "parameter " << t << " outside the integrated span";
    if (!t_.empty()) os << " [" << t_.front() << ", " << t_.back() << "]";
    throw DomainError(os.str());
  }
  if (t_.size() == 1) return {x_[0], y_[0], a_[0]};
  std::size_t i = static_cast<std::size_t>(std::upper_bound(t_.begin(), t_.end(), t) - t_.begin());
  i = std::clamp<std::size_t>(i, 1, t_.size() - 1) - 1;
  if (t == t_[i]) return {x_[i], y_[i], a_[i]};
  if (t == t_[i + 1]) return {x_[i + 1], y_[i + 1], a_[i + 1]};

  const double h = t_[i + 1] - t_[i];
  return hermite({&x_[i], &y_[i], &a_[i], j_.empty() ? nullptr : &j_[i]},
                 {&x_[i + 1], &y_[i + 1], &a_[i + 1], j_.empty() ? nullptr : &j_[i + 1]}, h, (t - t_[i]) / h);
}

// ---- integration ----------------------------------------------------------

Trajectory integrate(const SodeField& s, const TangentPoint& init, double t0, double t1, const FlowOptions& opt) {
  s.check_in_domain(init);
  if (opt.chart && !opt.chart->contains(init.x))
    throw ValidationError("initial point lies outside the chart box " + opt.chart->str());
  if (!std::isfinite(t0) || !std::isfinite(t1)) throw ValidationError("integration bounds must be finite");

  const System sys(s);
  const std::size_t n = s.dim();
  Vec z(2 * n), f(2 * n);
  std::copy(init.x.begin(), init.x.end(), z.begin());
  std::copy(init.y.begin(), init.y.end(), z.begin() + static_cast<std::ptrdiff_t>(n));
  sys.rhs(z, f);

  std::vector<double> ts;
  std::vector<Vec> xs, ys, as, js;
  auto jerk_or_zero = [&](const Vec& zz, const Vec& ff) {
    try {
      return sys.jerk(zz, ff);
    } catch (const Error&) {
      return Vec(n, 0.0);
    }
  };
  auto split = [n](const Vec& v, bool second) {
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n);
    return second ? Vec(mid, v.end()) : Vec(v.begin(), mid);
  };
  auto push = [&](double t, const Vec& zz, const Vec& ff, Vec j) {
    ts.push_back(t);
    xs.push_back(split(zz, false));
    ys.push_back(split(zz, true));
    as.push_back(split(ff, true));
    js.push_back(std::move(j));
  };
  push(t0, z, f, jerk_or_zero(z, f));

  Trajectory tr;
  tr.t_start_ = t0;
  tr.backward_ = t1 < t0;
  const double dir = tr.backward_ ? -1.0 : 1.0;

  Termination cause = Termination::Reached;
  if (t1 != t0) {
    double t = t0;
    double h = std::min(initial_step(sys, z, f, dir, opt), opt.max_step);
    Stages st(2 * n);
    Vec err;
    std::size_t steps = 0;
    bool last_rejected = false;
    while (dir * (t1 - t) > 0.0) {
      if (++steps > opt.max_steps) throw NumericalError("integration step budget exhausted");
      bool final_step = false;
      if (1.1 * h >= std::abs(t1 - t)) {
        h = std::abs(t1 - t);
        final_step = true;
      }
      if (h < opt.underflow * std::max(1.0, std::abs(t))) {
        cause = Termination::StepUnderflow;
        break;
      }
      Vec zn;
      double e = 0.0;
      try {
        zn = dp_step(sys, z, f, dir * h, st, &err);
        e = scaled_rms(err, z, zn, opt);
        if (!std::isfinite(e)) e = 1e10;
      } catch (const DomainError&) {
        h *= 0.5;
        ++tr.rejected_;
        last_rejected = true;
        continue;
      } catch (const NumericalError&) {
        h *= 0.5;
        ++tr.rejected_;
        last_rejected = true;
        continue;
      }
      if (e > 1.0) {
        h *= std::max(0.2, 0.9 * std::pow(e, -0.2));
        ++tr.rejected_;
        last_rejected = true;
        continue;
      }
      const double t_new = final_step ? t1 : t + dir * h;
      Vec jn = jerk_or_zero(zn, st.k[6]);
      double res_fac = 5.0;
      if (opt.dense_residual > 0.0) {
        // Dense output must itself solve the equation; the interpolation
        // error vanishes at the midpoint, so probe at the quarter points.
        const Vec xn = split(zn, false), yn = split(zn, true), an = split(st.k[6], true);
        double res = 0.0, snorm = 0.0;
        for (double frac : {0.25, 0.75}) {
          const CurveJet q = hermite({&xs.back(), &ys.back(), &as.back(), &js.back()}, {&xn, &yn, &an, &jn}, dir * h, frac);
          Vec sq(n);
          try {
            s.eval_into(q.x, q.v, sq);
          } catch (const Error&) {
            continue;
          }
          for (std::size_t k = 0; k < n; ++k) {
            res = std::max(res, std::abs(q.a[k] - sq[k]));
            snorm = std::max(snorm, std::abs(sq[k]));
          }
        }
        // Floor: second derivatives of the interpolant lose about
        // eps_mach * |x| / h^2 to cancellation.
        double xmag = 0.0;
        for (std::size_t k = 0; k < n; ++k)
          xmag = std::max({xmag, std::abs(xn[k]), std::abs(h * yn[k])});
        const double thr = opt.dense_residual * std::max(1.0, snorm) + 1e3 * 2.2e-16 * xmag / (h * h);
        if (!(res <= thr)) {
          h *= std::isfinite(res) ? std::clamp(0.9 * std::pow(thr / res, 0.25), 0.2, 0.9) : 0.5;
          ++tr.rejected_;
          last_rejected = true;
          continue;
        }
        if (res > 0.0) res_fac = 0.9 * std::pow(thr / res, 0.25);
      }
      t = t_new;
      z = std::move(zn);
      f = st.k[6];
      push(t, z, f, std::move(jn));

      double ynorm = 0.0;
      for (std::size_t i = n; i < 2 * n; ++i) ynorm = std::max(ynorm, std::abs(z[i]));
      if (ynorm > opt.blowup) {
        cause = Termination::BlowUp;
        break;
      }
      if (opt.chart && !opt.chart->contains(xs.back())) {
        cause = Termination::LeftChartBox;
        break;
      }
      double fac = e == 0.0 ? 5.0 : 0.9 * std::pow(e, -0.2);
      fac = std::clamp(std::min(fac, res_fac), 0.2, 5.0);
      if (last_rejected) fac = std::min(fac, 1.0);
      last_rejected = false;
      h = std::min(h * fac, opt.max_step);
    }
  }

  if (tr.backward_) {
    std::reverse(ts.begin(), ts.end());
    std::reverse(xs.begin(), xs.end());
    std::reverse(ys.begin(), ys.end());
    std::reverse(as.begin(), as.end());
    std::reverse(js.begin(), js.end());
  }
  tr.t_ = std::move(ts);
  tr.x_ = std::move(xs);
  tr.y_ = std::move(ys);
  tr.a_ = std::move(as);
  tr.j_ = std::move(js);
  tr.cause_ = cause;
  return tr;
}

TangentPoint integrate_on_mesh(const SodeField& s, const TangentPoint& init, std::span<const double> mesh,
                               double blowup) {
  if (mesh.empty()) throw ValidationError("empty step mesh");
  const System sys(s);
  const std::size_t n = s.dim();
  Vec z(2 * n), f(2 * n);
  std::copy(init.x.begin(), init.x.end(), z.begin());
  std::copy(init.y.begin(), init.y.end(), z.begin() + static_cast<std::ptrdiff_t>(n));
  sys.rhs(z, f);
  Stages st(2 * n);
  for (std::size_t i = 1; i < mesh.size(); ++i) {
    z = dp_step(sys, z, f, mesh[i] - mesh[i - 1], st, nullptr);
    f = st.k[6];
    for (std::size_t k = n; k < 2 * n; ++k)
      if (!(std::abs(z[k]) <= blowup)) throw DomainError("fixed-mesh integration crossed the blow-up threshold");
  }
  return TangentPoint(Vec(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(n)),
                      Vec(z.begin() + static_cast<std::ptrdiff_t>(n), z.end()));
}

// ---- maximal intervals ----------------------------------------------------

IntervalBound escape_time(const SodeField& s, const TangentPoint& init, Direction dir, double horizon,
                          const FlowOptions& opt) {
  if (!(horizon > 0.0)) throw ValidationError("horizon must be positive");
  const double sign = dir == Direction::Forward ? 1.0 : -1.0;
  const Trajectory tr = integrate(s, init, 0.0, sign * horizon, opt);
  IntervalBound b;
  b.cause = tr.cause();
  switch (tr.cause()) {
    case Termination::Reached:
      b.tag = BoundTag::ExceededHorizon;
      b.value = sign * horizon;
      return b;
    case Termination::BlowUp: {
      b.tag = BoundTag::VerifiedFinite;
      const auto& ts = tr.times();
      // Last segment: one end below the threshold, the far end above it.
      double inside = dir == Direction::Forward ? ts[ts.size() - 2] : ts[1];
      double outside = tr.t_end();
      auto ynorm = [&](double t) {
        const Vec v = tr.velocity(t);
        double m = 0.0;
        for (double c : v) m = std::max(m, std::abs(c));
        return m;
      };
      for (int it = 0; it < 200 && std::abs(outside - inside) > 1e-14 * std::max(1.0, std::abs(outside)); ++it) {
        const double mid = 0.5 * (inside + outside);
        (ynorm(mid) > opt.blowup ? outside : inside) = mid;
      }
      b.value = outside;
      return b;
    }
    default:
      b.tag = BoundTag::Truncated;
      b.value = tr.t_end();
      return b;
  }
}

MaximalIntervalEstimate maximal_interval(const SodeField& s, const TangentPoint& init, double horizon,
                                         const FlowOptions& opt) {
  return {escape_time(s, init, Direction::Backward, horizon, opt), escape_time(s, init, Direction::Forward, horizon, opt)};
}

double geodesic_residual(const SodeField& s, const Curve& c, std::span<const double> probe_times) {
  double r = 0.0;
  for (double t : probe_times) {
    const CurveJet j = c(t);
    const Vec sv = s(j.x, j.v);
    for (std::size_t k = 0; k < sv.size(); ++k) r = std::max(r, std::abs(j.a[k] - sv[k]));
  }
  return r;
}

double geodesic_residual(const SodeField& s, const Trajectory& tr, std::span<const double> probe_times) {
  return geodesic_residual(s, Curve([&tr](double t) { return tr.jet(t); }), probe_times);
}

std::vector<double> interior_times(const Trajectory& tr, std::size_t count) {
  std::vector<double> out(count);
  const double lo = tr.t_min(), hi = tr.t_max();
  for (std::size_t i = 0; i < count; ++i)
    out[i] = lo + (hi - lo) * static_cast<double>(i + 1) / static_cast<double>(count + 1);
  return out;
}

}  // namespace sode
