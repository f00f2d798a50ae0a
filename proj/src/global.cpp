#include "sode/global.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "sode/parallel.hpp"

namespace sode {

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::EvidenceFor: return "evidence-for";
    case Verdict::CounterexampleFound: return "counterexample-found";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

std::vector<TangentPoint> probe_initial_conditions(const Box& x_box, const ProbeSampling& s) {
  const std::size_t n = x_box.dim();
  const Box yb = s.y_box.value_or(Box::cube(n, -1.0, 1.0));
  if (yb.dim() != n) throw ValidationError("probe fiber box dimension mismatch");
  double ymax = 0.0;
  for (const auto& a : yb.axes) ymax = std::max({ymax, std::abs(a.lo), std::abs(a.hi)});
  if (!(ymax > s.min_speed)) throw ValidationError("probe fiber box lies inside the minimum-speed ball");
  const std::size_t count = std::min(s.samples, kMaxProbeSamples);
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<TangentPoint> out;
  out.reserve(count);
  while (out.size() < count) {
    Vec x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = x_box.axes[i].lo + (x_box.axes[i].hi - x_box.axes[i].lo) * unit(rng);
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = yb.axes[i].lo + (yb.axes[i].hi - yb.axes[i].lo) * unit(rng);
      m = std::max(m, std::abs(y[i]));
    }
    if (m < s.min_speed) continue;
    out.emplace_back(std::move(x), std::move(y));
  }
  return out;
}

std::vector<Box> box_ladder(const Box& K) { return {K, K.scaled(2.0), K.scaled(4.0), K.scaled(8.0)}; }

namespace {

// Node positions plus three interior dense samples per step, in time order.
template <typename Fn>
void for_each_sample(const Trajectory& tr, Fn&& fn) {
  const auto& ts = tr.times();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    fn(ts[i], tr.node_x(i));
    if (i + 1 < ts.size()) {
      for (double s : {0.25, 0.5, 0.75}) {
        const double t = ts[i] + s * (ts[i + 1] - ts[i]);
        fn(t, tr.position(t));
      }
    }
  }
}

std::optional<std::size_t> smallest_level(const std::vector<Box>& ladder, const Box& bbox) {
  for (std::size_t l = 0; l < ladder.size(); ++l) {
    bool inside = true;
    for (std::size_t i = 0; i < bbox.dim(); ++i)
      inside = inside && bbox.axes[i].lo >= ladder[l].axes[i].lo && bbox.axes[i].hi <= ladder[l].axes[i].hi;
    if (inside) return l;
  }
  return std::nullopt;
}

Box point_box(std::span<const double> x) {
  std::vector<Interval> a;
  for (double c : x) a.push_back({c, c});
  return Box(std::move(a));
}

struct SegmentResult {
  bool ok = false;
  double t_star = 0.0;
  Box bbox;
};

SegmentResult scan_segment(const Trajectory& tr, const Box& K) {
  SegmentResult r;
  // Last time the curve is in K, then the bounding box up to that time.
  for_each_sample(tr, [&](double t, const Vec& x) {
    if (K.contains(x)) r.t_star = t;
  });
  r.bbox = point_box(tr.node_x(0));
  for_each_sample(tr, [&](double t, const Vec& x) {
    if (t <= r.t_star) r.bbox.expand_to(x);
  });
  r.ok = true;
  return r;
}

FlowOptions with_chart(const FlowOptions& opt, const Box& fallback) {
  FlowOptions o = opt;
  if (!o.chart) o.chart = fallback;
  return o;
}

}  // namespace

EvidenceReport probe_pseudoconvexity(const SodeField& s, const Box& K, const ProbeSampling& sampling,
                                     const FlowOptions& opt) {
  if (K.dim() != s.dim()) throw ValidationError("probe box dimension mismatch");
  EvidenceReport r;
  r.property = "pseudoconvexity";
  r.K = K;
  r.ladder = box_ladder(K);
  r.sampling = sampling;
  r.ladder_counts.assign(r.ladder.size(), 0);

  const auto inits = probe_initial_conditions(K, sampling);
  std::vector<std::optional<SegmentResult>> results(inits.size());
  parallel_for(inits.size(), [&](std::size_t i) {
    try {
      const Trajectory tr = integrate(s, inits[i], 0.0, sampling.horizon, opt);
      results[i] = scan_segment(tr, K);
    } catch (const Error&) {
      results[i] = std::nullopt;
    }
  });

  Box hull = K;
  for (std::size_t i = 0; i < inits.size(); ++i) {
    if (!results[i]) {
      ++r.truncated;
      continue;
    }
    ++r.samples;
    const SegmentResult& seg = *results[i];
    if (seg.t_star > 0.0) ++r.segments;
    hull = hull.hull(seg.bbox);
    const auto level = smallest_level(r.ladder, seg.bbox);
    if (level) {
      for (std::size_t l = *level; l < r.ladder.size(); ++l) ++r.ladder_counts[l];
    } else {
      ++r.escaped;
      if (!r.witness) r.witness = Witness{inits[i].x, inits[i].y, 0.0, seg.t_star, seg.bbox, i};
    }
  }
  if (r.witness) {
    r.verdict = Verdict::CounterexampleFound;
  } else if (r.segments == 0) {
    r.verdict = Verdict::Inconclusive;
  } else {
    r.verdict = Verdict::EvidenceFor;
    r.k_prime = hull;
  }
  return r;
}

EvidenceReport probe_disprisonment(const SodeField& s, const Box& K, const ProbeSampling& sampling,
                                   const FlowOptions& opt) {
  if (K.dim() != s.dim()) throw ValidationError("probe box dimension mismatch");
  EvidenceReport r;
  r.property = "disprisonment";
  r.K = K;
  r.ladder = box_ladder(K);
  r.sampling = sampling;
  r.ladder_counts.assign(r.ladder.size(), 0);
  const FlowOptions o = with_chart(opt, r.ladder.back());

  enum class Outcome { Failed, Candidate, BlowUp, Escaped, Truncated };
  struct Sample {
    Outcome outcome = Outcome::Failed;
    std::optional<std::size_t> level;
  };
  const auto inits = probe_initial_conditions(K, sampling);
  std::vector<Sample> results(inits.size());
  parallel_for(inits.size(), [&](std::size_t i) {
    Sample smp;
    try {
      const Trajectory fwd = integrate(s, inits[i], 0.0, sampling.horizon, o);
      const Trajectory bwd = integrate(s, inits[i], 0.0, -sampling.horizon, o);
      Box bbox = point_box(inits[i].x);
      for_each_sample(fwd, [&](double, const Vec& x) { bbox.expand_to(x); });
      for_each_sample(bwd, [&](double, const Vec& x) { bbox.expand_to(x); });
      smp.level = smallest_level(r.ladder, bbox);
      const bool blew = fwd.cause() == Termination::BlowUp || bwd.cause() == Termination::BlowUp;
      const bool complete = fwd.cause() == Termination::Reached && bwd.cause() == Termination::Reached;
      if (!smp.level) smp.outcome = Outcome::Escaped;
      else if (blew) smp.outcome = Outcome::BlowUp;
      else if (complete) smp.outcome = Outcome::Candidate;
      else smp.outcome = Outcome::Truncated;
    } catch (const Error&) {
      smp.outcome = Outcome::Failed;
    }
    results[i] = smp;
  });

  for (std::size_t i = 0; i < inits.size(); ++i) {
    const Sample& smp = results[i];
    if (smp.outcome == Outcome::Failed) {
      ++r.truncated;
      continue;
    }
    ++r.samples;
    if (smp.level)
      for (std::size_t l = *smp.level; l < r.ladder.size(); ++l) ++r.ladder_counts[l];
    switch (smp.outcome) {
      case Outcome::Candidate:
        ++r.candidates;
        if (!r.witness)
          r.witness = Witness{inits[i].x, inits[i].y, -sampling.horizon, sampling.horizon, r.ladder[*smp.level], i};
        break;
      case Outcome::BlowUp: ++r.blowup; break;
      case Outcome::Escaped: ++r.escaped; break;
      default: ++r.truncated; break;
    }
  }
  if (r.witness) r.verdict = Verdict::CounterexampleFound;
  else if (r.samples == 0) r.verdict = Verdict::Inconclusive;
  else r.verdict = Verdict::EvidenceFor;
  return r;
}

bool replay_witness(const SodeField& s, const EvidenceReport& r, const FlowOptions& opt, double tol) {
  if (!r.witness) return false;
  const Witness& w = *r.witness;
  const TangentPoint init(w.x0, w.y0);
  if (r.property == "disprisonment") {
    FlowOptions o = opt;
    o.chart = std::nullopt;
    const Trajectory fwd = integrate(s, init, 0.0, w.t_hi, o);
    const Trajectory bwd = integrate(s, init, 0.0, w.t_lo, o);
    if (fwd.cause() != Termination::Reached || bwd.cause() != Termination::Reached) return false;
    bool inside = true;
    auto check = [&](double, const Vec& x) { inside = inside && w.box.contains(x, tol); };
    for_each_sample(fwd, check);
    for_each_sample(bwd, check);
    return inside;
  }
  // Pseudoconvexity: the segment ends in K and leaves the largest ladder box.
  const Trajectory tr = integrate(s, init, 0.0, w.t_hi, opt);
  if (tr.cause() != Termination::Reached) return false;
  if (!r.K.contains(tr.final_state().x, tol)) return false;
  bool escaped = false;
  for_each_sample(tr, [&](double, const Vec& x) { escaped = escaped || !r.ladder.back().contains(x, -tol); });
  return escaped;
}

// ---- shooting ----------------------------------------------------------------

namespace {

double inf_norm(const Vec& v) {
  double m = 0.0;
  for (double c : v) m = std::max(m, std::abs(c));
  return m;
}

Vec shoot_residual(const SodeField& s, std::span<const double> p, std::span<const double> q, double eps,
                   const Vec& v, const FlowOptions& o) {
  Vec f = exp_map(s, p, v, eps, o);
  for (std::size_t k = 0; k < f.size(); ++k) f[k] -= q[k];
  return f;
}

}  // namespace

ShootingResult connect_geodesically(const SodeField& s, std::span<const double> p, std::span<const double> q,
                                    double eps, std::span<const double> v0, const ShootingOptions& opt) {
  const std::size_t n = s.dim();
  if (p.size() != n || q.size() != n || v0.size() != n) throw ValidationError("shooting: dimension mismatch");
  if (eps == 0.0) throw ValidationError("shooting needs eps != 0 (exp^0 is the projection)");
  ShootingResult r;
  r.v.assign(v0.begin(), v0.end());
  Vec F = shoot_residual(s, p, q, eps, r.v, opt.flow);
  r.residual = inf_norm(F);
  r.history.push_back(r.residual);
  while (r.residual >= opt.tol) {
    if (r.iterations >= opt.max_iter) {
      std::ostringstream os;
      os << "shooting did not converge in " << opt.max_iter << " iterations (residual " << r.residual << ")";
      throw NumericalError(os.str());
    }
    const ExpJacobian J = exp_jacobian(s, p, r.v, eps, 0.0, opt.flow);
    if (!(J.condition < 1e12)) {
      std::ostringstream os;
      os << "singular exp Jacobian (condition " << J.condition
         << "); a conjugate point may lie near this eps, see conjugate_scan";
      throw NumericalError(os.str());
    }
    const Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(F.data(), static_cast<Eigen::Index>(n));
    const Eigen::VectorXd delta = J.matrix.fullPivLu().solve(rhs);
    double lambda = 1.0;
    bool accepted = false;
    std::string last_error;
    for (std::size_t h = 0; h <= opt.max_halvings; ++h, lambda *= 0.5) {
      Vec vn = r.v;
      for (std::size_t k = 0; k < n; ++k) vn[k] += lambda * delta(static_cast<Eigen::Index>(k));
      try {
        Vec Fn = shoot_residual(s, p, q, eps, vn, opt.flow);
        const double rn = inf_norm(Fn);
        if (rn < r.residual) {
          r.v = std::move(vn);
          F = std::move(Fn);
          r.residual = rn;
          accepted = true;
          break;
        }
      } catch (const DomainError& e) {
        last_error = e.what();
      }
    }
    ++r.iterations;
    r.history.push_back(r.residual);
    if (!accepted)
      throw NumericalError("damped Newton step failed to reduce the residual after " +
                           std::to_string(opt.max_halvings) + " halvings" +
                           (last_error.empty() ? std::string() : "; iterate left the eps-domain: " + last_error));
  }
  return r;
}

// ---- C0 distance ------------------------------------------------------------

C0Distance c0_distance(const SodeField& s1, const SodeField& s2, const Box& region, std::size_t grid_per_axis,
                       std::size_t random_samples, std::uint64_t seed) {
  const std::size_t n = s1.dim();
  if (s2.dim() != n || region.dim() != 2 * n)
    throw ValidationError("c0_distance: region must have 2n axes matching both fields");
  std::size_t k = std::max<std::size_t>(1, grid_per_axis | 1);
  auto total = [&](std::size_t kk) {
    double t = 1.0;
    for (std::size_t i = 0; i < 2 * n; ++i) t *= static_cast<double>(kk);
    return t;
  };
  while (k > 1 && total(k) > 2e5) k -= 2;

  std::vector<Vec> pts;
  std::vector<std::size_t> idx(2 * n, 0);
  const std::size_t grid_total = static_cast<std::size_t>(total(k));
  for (std::size_t g = 0; g < grid_total; ++g) {
    std::size_t rem = g;
    Vec z(2 * n);
    for (std::size_t a = 0; a < 2 * n; ++a) {
      const std::size_t i = rem % k;
      rem /= k;
      const auto& ax = region.axes[a];
      z[a] = k == 1 ? 0.5 * (ax.lo + ax.hi) : ax.lo + (ax.hi - ax.lo) * static_cast<double>(i) / static_cast<double>(k - 1);
    }
    pts.push_back(std::move(z));
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t r = 0; r < random_samples; ++r) {
    Vec z(2 * n);
    for (std::size_t a = 0; a < 2 * n; ++a) z[a] = region.axes[a].lo + (region.axes[a].hi - region.axes[a].lo) * unit(rng);
    pts.push_back(std::move(z));
  }

  std::vector<double> vals(pts.size(), -1.0);
  parallel_for(pts.size(), [&](std::size_t i) {
    const std::span<const double> x(pts[i].data(), n), y(pts[i].data() + n, n);
    try {
      const Vec a = s1(x, y), b = s2(x, y);
      double m = 0.0;
      for (std::size_t c = 0; c < n; ++c) m = std::max(m, std::abs(a[c] - b[c]));
      vals[i] = m;
    } catch (const Error&) {
    }
  });
  C0Distance d;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (vals[i] < 0.0) continue;
    ++d.samples;
    if (d.argmax.empty() || vals[i] > d.value) {
      d.value = vals[i];
      d.argmax = pts[i];
    }
  }
  return d;
}

// ---- bumps -------------------------------------------------------------------

void BumpSpec::validate() const {
  const std::size_t n = amplitude.size();
  if (n == 0 || center_x.size() != n || center_y.size() != n || radius_x.size() != n || radius_y.size() != n)
    throw ValidationError("bump: center, radii and amplitude must all have dimension n");
  for (std::size_t i = 0; i < n; ++i)
    if (!(radius_x[i] > 0.0) || !(radius_y[i] > 0.0)) throw ValidationError("bump radii must be positive");
}

Box BumpSpec::support() const {
  validate();
  std::vector<Interval> a;
  for (std::size_t i = 0; i < dim(); ++i) a.push_back({center_x[i] - radius_x[i], center_x[i] + radius_x[i]});
  for (std::size_t i = 0; i < dim(); ++i) a.push_back({center_y[i] - radius_y[i], center_y[i] + radius_y[i]});
  return Box(std::move(a));
}

double BumpSpec::sup_norm() const {
  double m = 0.0;
  for (double a : amplitude) m = std::max(m, std::abs(a));
  return m;
}

BumpSpec BumpSpec::scaled_to(double delta) const {
  BumpSpec b = *this;
  const double m = sup_norm();
  if (m == 0.0) throw ValidationError("cannot rescale a zero-amplitude bump");
  for (double& a : b.amplitude) a *= delta / m;
  return b;
}

std::vector<Expression> BumpSpec::expressions() const {
  validate();
  const std::size_t n = dim();
  const Expression one = Expression::number(1.0), two = Expression::number(2.0), three = Expression::number(3.0);
  auto factor = [&](const Expression& var, double c, double r) {
    const Expression u = (var - Expression::number(c)) / Expression::number(r);
    const Expression w = one - u.pow(two);
    return ((w + Expression::apply(Op::Abs, w)) / two).pow(three);
  };
  std::optional<Expression> profile;
  for (std::size_t j = 0; j < n; ++j) {
    const int k = static_cast<int>(j + 1);
    const Expression f = factor(Expression::x(k), center_x[j], radius_x[j]) *
                         factor(Expression::y(k), center_y[j], radius_y[j]);
    profile = profile ? *profile * f : f;
  }
  std::vector<Expression> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(Expression::number(amplitude[i]) * *profile);
  return out;
}

SodeField perturb(const SodeField& s, const BumpSpec& b) {
  b.validate();
  if (b.dim() != s.dim()) throw ValidationError("bump dimension differs from the field's");
  const std::vector<Expression> delta = b.expressions();
  if (const auto& ex = s.expressions()) {
    std::vector<Expression> out;
    for (std::size_t i = 0; i < ex->size(); ++i)
      out.push_back(b.amplitude[i] == 0.0 ? (*ex)[i] : (*ex)[i] + delta[i]);
    return SodeField(std::move(out), s.domain());
  }
  return SodeField(std::make_shared<SumModel>(s.model_ptr(), std::make_shared<ExpressionModel>(s.dim(), delta)),
                   s.domain(), s.description() + " + bump");
}

StabilitySweep stability_sweep(const SodeField& s, const BumpSpec& shape, const Box& K, double delta_lo,
                               double delta_hi, std::size_t iterations, const ProbeSampling& sampling,
                               const FlowOptions& opt) {
  StabilitySweep sw;
  auto evaluate = [&](double delta) {
    const SodeField f = delta == 0.0 ? s : perturb(s, shape.scaled_to(delta));
    StabilityPoint p;
    p.delta = delta;
    p.pseudoconvexity = probe_pseudoconvexity(f, K, sampling, opt).verdict;
    p.disprisonment = probe_disprisonment(f, K, sampling, opt).verdict;
    sw.evaluated.push_back(p);
    return p.stable();
  };
  const bool lo_stable = evaluate(delta_lo);
  const bool hi_stable = evaluate(delta_hi);
  if (lo_stable == hi_stable) {
    if (lo_stable) sw.transition_lo = delta_hi;
    else sw.transition_hi = delta_lo;
    return sw;
  }
  // Keep the stable end as lo.
  double stable = lo_stable ? delta_lo : delta_hi;
  double unstable = lo_stable ? delta_hi : delta_lo;
  for (std::size_t i = 0; i < iterations; ++i) {
    const double mid = 0.5 * (stable + unstable);
    (evaluate(mid) ? stable : unstable) = mid;
  }
  sw.transition_lo = stable;
  sw.transition_hi = unstable;
  return sw;
}

}  // namespace sode
