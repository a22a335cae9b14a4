#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "raresim/markov.hpp"

namespace raresim {

// How the good state's row of a derived measure is built. Conditioned
// reweights the first step by the hitting probability of each successor
// (this is what makes single-run estimates exact); Nominal keeps the
// model's own first-step row.
enum class FirstStep { Conditioned, Nominal };

enum class GammaSolver { Auto, Dense, Tridiagonal };

// value[x] = probability of entering the bad set before the good state,
// starting from x. 0 on the good state, 1 on bad states, and the first-step
// equations hold on internal states. from_start aggregates over the good
// state's row: the probability that one excursion ends badly.
struct HittingProbabilities {
  std::vector<double> value;
  double from_start = 0.0;
};

// Dense solve with partial pivoting by default; birth-death-structured
// models take a dedicated tridiagonal elimination. States that cannot reach
// the bad set are excluded from the system and get an exact 0. Throws
// SolverError when the first-step residual exceeds 1e-10.
HittingProbabilities hitting_probabilities(const MarkovModel& model,
                                           GammaSolver solver = GammaSolver::Auto);

// Expected-visit statistics of an absorbing chain, backed by one LU
// factorization of the internal block. Column solves are cached; the cache
// is guarded, so lookups may run concurrently.
class FundamentalMatrix {
 public:
  explicit FundamentalMatrix(const MarkovModel& chain);
  ~FundamentalMatrix();
  FundamentalMatrix(FundamentalMatrix&&) noexcept;
  FundamentalMatrix& operator=(FundamentalMatrix&&) noexcept;

  // expected visits to x starting at x, before absorption (>= 1); 1 on
  // absorbing states by convention
  double visits_self(StateId x) const;

  // expected visits to x over one excursion from the good state; for a bad
  // state this is the probability of being absorbed there
  double visits_from_start(StateId x) const;

  // probability of reaching `to` (an internal state) from `from` before
  // absorption; reach(x, x) is the return probability, and
  // visits_self(x) = 1 / (1 - reach(x, x))
  double reach(StateId from, StateId to) const;

  std::vector<double> all_visits_self() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct VisitQuantities {
  std::vector<double> v;  // visits_self per state
  std::vector<double> u;  // visits_from_start per state
};

VisitQuantities visit_quantities(const MarkovModel& chain);

// The measure under which every sampled excursion that can end badly does,
// and carries likelihood weight exactly equal to the hit probability:
// row x is p(x,y) * value(y) / value(x) on internal states. Rows of states
// with hitting probability 0 are copied from the model and flagged.
ChangeOfMeasure zero_variance_measure(const MarkovModel& model,
                                      const HittingProbabilities& hp,
                                      FirstStep first_step = FirstStep::Conditioned);

// E[ 1{bad} * N(x,y) | start at x ]: the expected number of x->y transitions
// on excursions that end badly. Closed form: visits_self(x) * p(x,y) * value(y).
double expected_transition_count(const MarkovModel& model, StateId x, StateId y);
double expected_transition_count(const MarkovModel& model,
                                 const HittingProbabilities& hp,
                                 const FundamentalMatrix& fm, StateId x, StateId y);

// The measure the cross-entropy iteration converges to, evaluated exactly:
// row x is proportional to u(x) * p(x,y) * value(y). Agrees with
// zero_variance_measure entrywise; rows with zero mass fall back to the
// model's row and are flagged.
ChangeOfMeasure cross_entropy_measure_exact(const MarkovModel& model,
                                            FirstStep first_step = FirstStep::Conditioned);

// Kullback-Leibler distance between the path distributions induced by two
// measures over one excursion, computed as an edge sum weighted by expected
// visit counts under `reference`. Terms with zero expected count contribute
// 0; returns +infinity when the candidate misses an edge the reference uses.
double kl_distance(const MarkovModel& model, const ChangeOfMeasure& reference,
                   const ChangeOfMeasure& candidate);

// Exact second moment of the weighted-indicator estimator under `measure`,
// from the tilted linear system. Returns +infinity when that system does not
// converge (the moment is genuinely divergent).
double exact_second_moment(const MarkovModel& model, const ChangeOfMeasure& measure);

// Probability of the single most probable path from internal state x to the
// bad set (shortest path under -log p); a cheap lower-bound stand-in for the
// hitting probability. 0 when the bad set is unreachable.
double max_path_probability(const MarkovModel& model, StateId x);

// Everything the `exact` command reports for one model.
struct ExactReport {
  HittingProbabilities hp;
  ChangeOfMeasure zero_variance;
  ChangeOfMeasure cross_entropy;
  VisitQuantities visits;
  std::vector<std::pair<std::string, double>> kl_to;  // from the zero-variance measure
  double second_moment_nominal = 0.0;
  double second_moment_zero_variance = 0.0;
  double max_measure_diff = 0.0;  // entrywise gap between the two derivations
};

ExactReport exact_report(const MarkovModel& model,
                         FirstStep first_step = FirstStep::Conditioned);

}  // namespace raresim
