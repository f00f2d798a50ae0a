#pragma once

// Empirical probes of global behaviour: pseudoconvexity and disprisonment
// evidence, geodesic shooting, C0 distance between SODEs and compactly
// supported perturbations. Probes produce evidence, never proofs.

#include <optional>
#include <string>
#include <vector>

#include "sode/expmap.hpp"
#include "sode/flow.hpp"

namespace sode {

enum class Verdict { EvidenceFor, CounterexampleFound, Inconclusive };
std::string to_string(Verdict v);

struct ProbeSampling {
  std::size_t samples = 5000;  // capped at kMaxProbeSamples
  std::uint64_t seed = 1;
  double horizon = 50.0;
  std::optional<Box> y_box;    // default [-1, 1]^n
  double min_speed = 0.25;     // ||y||_inf below this is resampled
};

inline constexpr std::size_t kMaxProbeSamples = 5000;

/// Initial conditions with x uniform in `x_box` and y uniform in the fiber
/// box away from zero. The first k of n > k samples are the k-sample set.
std::vector<TangentPoint> probe_initial_conditions(const Box& x_box, const ProbeSampling& s);

/// Ladder of K scaled about its center by 1, 2, 4, 8.
std::vector<Box> box_ladder(const Box& K);

struct Witness {
  Vec x0;
  Vec y0;
  double t_lo = 0.0;
  double t_hi = 0.0;
  Box box;          // disprisonment: box that contains the whole curve;
                    // pseudoconvexity: bounding box of the segment
  std::size_t sample_index = 0;
};

struct EvidenceReport {
  std::string property;  // "pseudoconvexity" | "disprisonment"
  Verdict verdict = Verdict::Inconclusive;
  std::optional<Witness> witness;
  std::optional<Box> k_prime;  // pseudoconvexity: hull of K and sampled segments
  Box K;
  std::vector<Box> ladder;
  ProbeSampling sampling;
  std::size_t samples = 0;          // integrated samples
  std::size_t segments = 0;         // pseudoconvexity: segments returning to K after t = 0
  std::size_t candidates = 0;       // disprisonment: imprisonment candidates
  std::size_t blowup = 0;           // terminated by blow-up (never candidates)
  std::size_t escaped = 0;          // left the largest ladder box
  std::size_t truncated = 0;        // step underflow / chart exit / evaluation failure
  std::vector<std::size_t> ladder_counts;  // per ladder level: segments or curves contained
  std::string note = "empirical evidence from finite sampling, not a proof";
};

EvidenceReport probe_pseudoconvexity(const SodeField& s, const Box& K, const ProbeSampling& sampling = {},
                                     const FlowOptions& opt = {});
EvidenceReport probe_disprisonment(const SodeField& s, const Box& K, const ProbeSampling& sampling = {},
                                   const FlowOptions& opt = {});

/// Re-integrates a counterexample witness and reports whether the violation
/// is reproduced (with slack `tol`).
bool replay_witness(const SodeField& s, const EvidenceReport& r, const FlowOptions& opt = {}, double tol = 1e-6);

struct ShootingOptions {
  std::size_t max_iter = 20;
  std::size_t max_halvings = 8;
  double tol = 1e-8;
  FlowOptions flow = FlowOptions::with_tolerances(1e-12, 1e-11);
};

struct ShootingResult {
  Vec v;
  double residual = 0.0;  // ||exp^eps_p(v) - q||_inf
  std::size_t iterations = 0;
  std::vector<double> history;  // residual after each iteration (index 0 = initial guess)
};

/// Damped Newton on F(v) = exp^eps_p(v) - q. Throws NumericalError on a
/// singular Jacobian or when max_iter is exceeded, DomainError when the
/// initial guess is outside the eps-domain.
ShootingResult connect_geodesically(const SodeField& s, std::span<const double> p, std::span<const double> q,
                                    double eps, std::span<const double> v0, const ShootingOptions& opt = {});

struct C0Distance {
  double value = 0.0;  // sampled lower bound of the sup
  std::size_t samples = 0;
  Vec argmax;          // (x, y) where it was attained
};

/// Max of ||S1 - S2||_inf over an odd tensor grid of `grid_per_axis` points
/// per axis (including the center) and `random_samples` random points in
/// `region` (2n axes: x then y).
C0Distance c0_distance(const SodeField& s1, const SodeField& s2, const Box& region, std::size_t grid_per_axis = 9,
                       std::size_t random_samples = 2000, std::uint64_t seed = 1);

/// Delta S^i = amplitude_i * prod_j psi((x_j - cx_j)/rx_j) psi((y_j - cy_j)/ry_j),
/// psi(u) = max(0, 1 - u^2)^3.
struct BumpSpec {
  Vec center_x, center_y;
  Vec radius_x, radius_y;
  Vec amplitude;

  std::size_t dim() const noexcept { return amplitude.size(); }
  void validate() const;
  /// Support as a box in (x, y).
  Box support() const;
  double sup_norm() const;
  std::vector<Expression> expressions() const;
  BumpSpec scaled_to(double delta) const;  // same shape, sup norm delta
};

SodeField perturb(const SodeField& s, const BumpSpec& b);

struct StabilityPoint {
  double delta = 0.0;
  Verdict pseudoconvexity = Verdict::Inconclusive;
  Verdict disprisonment = Verdict::Inconclusive;
  bool stable() const noexcept {
    return pseudoconvexity == Verdict::EvidenceFor && disprisonment == Verdict::EvidenceFor;
  }
};

struct StabilitySweep {
  std::vector<StabilityPoint> evaluated;  // in evaluation order
  std::optional<double> transition_lo;    // largest stable delta found
  std::optional<double> transition_hi;    // smallest unstable delta found
};

/// Evaluates both probes at delta_lo and delta_hi for the bump scaled to
/// each delta; if the verdicts differ, bisects `iterations` times.
StabilitySweep stability_sweep(const SodeField& s, const BumpSpec& shape, const Box& K, double delta_lo,
                               double delta_hi, std::size_t iterations, const ProbeSampling& sampling = {},
                               const FlowOptions& opt = {});

}  // namespace sode
