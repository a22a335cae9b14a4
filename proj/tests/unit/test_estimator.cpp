#include "doctest.h"

#include <cmath>
#include <limits>

#include "raresim/errors.hpp"
#include "raresim/estimator.hpp"
#include "raresim/exact.hpp"
#include "raresim/markov.hpp"
#include "raresim/mm1.hpp"
#include "raresim/rng.hpp"
#include "support/test_support.hpp"

using namespace raresim;
using testsup::close;

TEST_CASE("sampling under the model itself is unbiased") {
  const MarkovModel m = build_mm1({0.8, 1.0, 5});
  const double pa = hitting_probabilities(m).from_start;  // 256/2101

  const EstimatorReport r =
      estimate(m, nominal_measure(m), 50000, RngStream::root(19));
  CHECK(r.replications == 50000);
  CHECK(r.hits > 0);
  CHECK_FALSE(r.zero_hits);
  // binomial: every weight is exactly one, mean = hits / n
  CHECK(close(r.mean, static_cast<double>(r.hits) / 50000.0, 1e-15, 0.0));
  CHECK(close(r.second_moment, r.mean, 1e-15, 0.0));
  // within four standard errors of the exact answer
  const double se = std::sqrt(pa * (1.0 - pa) / 50000.0);
  CHECK(std::abs(r.mean - pa) < 4.0 * se);
  // the mean-error and per-replication conventions differ by sqrt(n)
  CHECK(close(r.cv, r.relative_error * std::sqrt(50000.0), 1e-12, 0.0));
  CHECK(close(r.ci95_halfwidth, 1.96 * std::sqrt(r.variance / 50000.0), 1e-12, 0.0));
  CHECK(r.ci_reliable);
}

TEST_CASE("the optimal measure estimates with zero variance") {
  const MarkovModel m = build_mm1({0.8, 1.0, 10});
  const HittingProbabilities hp = hitting_probabilities(m);
  const ChangeOfMeasure zv = zero_variance_measure(m, hp);

  const EstimatorReport r = estimate(m, zv, 1000, RngStream::root(5));
  CHECK(r.hits == 1000);  // conditioned first step: every path hits
  CHECK(close(r.mean, hp.from_start, 1e-10, 0.0));
  CHECK(r.relative_error <= 1e-12);
  CHECK(r.cv <= 1e-10);
  CHECK(std::abs(r.rat - 2.0) <= 1e-10);

  // every individual weight equals the estimate: spot-check a few paths
  RngStream probe = RngStream::root(5);
  for (int i = 0; i < 10; ++i) {
    RngStream sub = probe.substream(static_cast<std::uint64_t>(i));
    const SamplePath p = sample_path(m, zv, sub);
    REQUIRE(p.hit_bad);
    CHECK(close(std::exp(p.log_weight), hp.from_start, 1e-10, 0.0));
  }
}

TEST_CASE("the report is bit-identical for any thread count") {
  const MarkovModel m = build_mm1({0.8, 1.0, 10});
  const ChangeOfMeasure uni = uniform_neighbor_measure(m);

  const EstimatorReport a = estimate(m, uni, 20000, RngStream::root(33), 1);
  const EstimatorReport b = estimate(m, uni, 20000, RngStream::root(33), 4);
  const EstimatorReport c = estimate(m, uni, 20000, RngStream::root(33), 3);
  CHECK(a.mean == b.mean);
  CHECK(a.second_moment == b.second_moment);
  CHECK(a.variance == b.variance);
  CHECK(a.hits == b.hits);
  CHECK(a.mean == c.mean);
  CHECK(a.variance == c.variance);
  CHECK(a.hits == c.hits);
}

TEST_CASE("a trained measure lands near the exact probability") {
  const MarkovModel m = build_mm1({0.8, 1.0, 10});
  const double pa = hitting_probabilities(m).from_start;
  const ChangeOfMeasure ce = cross_entropy_measure_exact(m);

  // the exactly-evaluated limit measure has (numerically) zero variance, so
  // the deviation bound is pure floating-point rounding plus a tiny floor
  const EstimatorReport r = estimate(m, ce, 100000, RngStream::root(101), 4);
  CHECK(std::abs(r.mean - pa) <
        4.0 * std::sqrt(r.variance / static_cast<double>(r.replications)) + 1e-13 * pa);
  CHECK(std::abs(r.rat - 2.0) < 0.01);
}

TEST_CASE("zero hits produce a flagged zero estimate, not a crash") {
  // nominal sampling of a ~1e-11 event with 100 replications never hits
  const MarkovModel m = build_mm1({0.8, 1.0, 100});
  const EstimatorReport r = estimate(m, nominal_measure(m), 100, RngStream::root(2));
  CHECK(r.zero_hits);
  CHECK(r.hits == 0);
  CHECK(r.mean == 0.0);
  CHECK(r.variance == 0.0);
  CHECK_FALSE(r.ci_reliable);
  CHECK(std::isnan(r.rat));
}

TEST_CASE("estimator rejects nonsense arguments and missing support") {
  const MarkovModel m = build_mm1({0.8, 1.0, 5});
  CHECK_THROWS_AS(estimate(m, nominal_measure(m), 0, RngStream::root(1)), ModelError);
  CHECK_THROWS_AS(estimate(m, nominal_measure(m), 100, RngStream::root(1), 0), ModelError);

  ChangeOfMeasure crippled = nominal_measure(m);
  crippled.rows[3] = {{2, 1.0}};  // drops the required edge 3 -> 4
  CHECK_THROWS_AS(estimate(m, crippled, 100, RngStream::root(1)), SupportError);
}

TEST_CASE("optimality diagnostics line up with closed forms") {
  const MarkovModel m = build_mm1({0.8, 1.0, 10});
  const HittingProbabilities hp = hitting_probabilities(m);
  const ChangeOfMeasure zv = zero_variance_measure(m, hp);

  const EstimatorReport r = estimate(m, zv, 2000, RngStream::root(9));
  const OptimalityDiagnostics d = optimality_check(m, zv, r);
  CHECK(d.kl <= 1e-15);
  CHECK(close(d.exact_pa, hp.from_start, 1e-12, 0.0));
  CHECK(close(d.log_pa, std::log(hp.from_start), 1e-12, 0.0));
  CHECK(d.kl_over_abs_log_pa <= 1e-15);
  CHECK(std::abs(d.rat - 2.0) <= 1e-12);
  CHECK(std::abs(d.rat_estimated - 2.0) <= 1e-10);

  // under-sampling measures have an infinite exact second moment: rat is NaN
  ChangeOfMeasure down_heavy = nominal_measure(m);
  for (StateId x = 1; x < 10; ++x) down_heavy.rows[x] = {{x - 1, 0.99}, {x + 1, 0.01}};
  const EstimatorReport r2 = estimate(m, down_heavy, 500, RngStream::root(9));
  const OptimalityDiagnostics d2 = optimality_check(m, down_heavy, r2);
  CHECK(std::isnan(d2.rat));
  CHECK(d2.kl > 0.0);
}

TEST_CASE("random-chain estimates agree with the oracle probability") {
  RngStream rng = RngStream::root(314);
  for (int i = 0; i < 5; ++i) {
    RngStream sub = rng.substream(static_cast<std::uint64_t>(i));
    const MarkovModel m = testsup::random_model(sub);
    const std::vector<double> gamma = testsup::oracle_gamma(m);
    double pa = 0.0;
    for (const Edge& e : m.rows[0]) pa += e.prob * gamma[e.to];

    const EstimatorReport r =
        estimate(m, nominal_measure(m), 40000, RngStream::root(1000 + i));
    // the corpus includes chains whose hit probability rounds to 1, so the
    // binomial deviation needs an absolute floor
    const double se = std::sqrt(std::max(pa * (1.0 - pa), 0.0) / 40000.0);
    CHECK(std::abs(r.mean - pa) < 4.5 * se + 1e-9);
  }
}
