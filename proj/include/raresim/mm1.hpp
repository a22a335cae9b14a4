#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "raresim/cross_entropy.hpp"
#include "raresim/markov.hpp"

namespace raresim {

// Embedded jump chain of the M/M/1 queue length, truncated at overflow
// level n: states 0..n, up probability p = lambda / (lambda + mu) from every
// internal state, down probability q = 1 - p. State 0 is the good state,
// state n the bad one. Requires lambda < mu so overflow is the rare event.
struct Mm1Params {
  double lambda = 0.8;
  double mu = 1.0;
  int n = 10;

  double p() const { return lambda / (lambda + mu); }
  double q() const { return 1.0 - p(); }
  double sigma() const { return mu / lambda; }  // per-step tilt, > 1
  void validate() const;                         // throws ModelError
};

MarkovModel build_mm1(const Mm1Params& params);

// Closed form for the probability of reaching n before 0 from level x.
// Evaluated through expm1 so it stays accurate when sigma is close to 1.
double mm1_hit_probability(const Mm1Params& params, int x);

// Closed form {up, down} row of the zero-variance measure at internal level
// x. up is computed as 1 - down, so the row sums to 1 exactly and the row at
// x = 1 is exactly {1, 0}.
std::pair<double, double> mm1_zero_variance_row(const Mm1Params& params, int x);

// Expected visits to each level over one excursion under the zero-variance
// measure, from the backward return-probability recursion (an excursion
// under that measure never comes back to 0, so every level is passed).
// Entry x is the visit count to level x; 1 on the boundary states.
std::vector<double> mm1_zero_variance_visits(const Mm1Params& params);

// KL distance from the zero-variance measure to `candidate` via the
// birth-death closed form: an edge sum weighted by the visit counts above.
// Must agree with the generic kl_distance.
double mm1_kl_closed_form(const Mm1Params& params, const ChangeOfMeasure& candidate);

// One row per overflow level n: train, estimate, and attach the exact
// optimality diagnostics.
struct SweepRow {
  int n = 0;
  double exact_pa = 0.0;
  double mean = 0.0;
  double re = 0.0;   // per-replication coefficient of variation
  double rat = 0.0;  // from the estimator's sampled moments
  double kl = 0.0;
  double kl_over_abs_log_pa = 0.0;
  std::int64_t hits = 0;
  std::int64_t replications = 0;
  std::string error;  // non-empty when this cell failed; other fields are NaN
};

struct SweepConfig {
  double lambda = 0.8;
  double mu = 1.0;
  std::vector<int> grid = {10, 25, 50, 100};
  int iterations = 10;
  int k_scale = 200;    // samples per training iteration: max(k_floor, k_scale * n)
  int k_floor = 2000;
  std::int64_t replications = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
  double convergence_norm = 1e-3;
  double smoothing = 1.0;
  SamplerLimits limits;
};

struct SweepResult {
  std::vector<SweepRow> rows;
};

// Runs the grid; cell n derives its random streams from substream(seed, n),
// so per-cell results do not depend on the order cells run in. A failing
// cell records its error and the sweep continues.
SweepResult run_sweep(const SweepConfig& config);

}  // namespace raresim
