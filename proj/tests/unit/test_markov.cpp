#include "doctest.h"

#include <cmath>

#include "raresim/errors.hpp"
#include "raresim/markov.hpp"
#include "raresim/mm1.hpp"
#include "support/test_support.hpp"

using namespace raresim;

namespace {

// 0 good, 1..2 internal, 3 bad; state 2 also leaks back to 0
MarkovModel small_model() {
  MarkovModel m;
  m.n_states = 4;
  m.kinds = {StateKind::Good, StateKind::Internal, StateKind::Internal, StateKind::Bad};
  m.rows = {
      {{1, 1.0}},
      {{0, 0.5}, {2, 0.5}},
      {{0, 0.25}, {1, 0.25}, {3, 0.5}},
      {{3, 1.0}},
  };
  return m;
}

}  // namespace

TEST_CASE("a well-formed model validates cleanly") {
  CHECK(validate_model(small_model()).empty());
  CHECK_NOTHROW(require_valid(small_model()));
  CHECK(validate_model(build_mm1({0.8, 1.0, 10})).empty());
}

TEST_CASE("validation rejects malformed models") {
  auto has_rule = [](const std::vector<Violation>& v, const std::string& rule) {
    for (const auto& x : v)
      if (x.rule == rule) return true;
    return false;
  };

  MarkovModel m = small_model();
  m.kinds[0] = StateKind::Internal;  // no good state
  CHECK(has_rule(validate_model(m), "good-state"));

  m = small_model();
  m.kinds[3] = StateKind::Internal;  // no bad state
  CHECK(has_rule(validate_model(m), "no-bad-state"));

  m = small_model();
  m.rows[1] = {{0, 0.5}, {2, 0.6}};  // row sums to 1.1
  CHECK(has_rule(validate_model(m), "row-not-stochastic"));

  m = small_model();
  m.rows[1] = {{2, 0.5}, {0, 0.5}};  // out of order
  CHECK_FALSE(validate_model(m).empty());

  m = small_model();
  m.rows[0] = {{3, 1.0}};  // good state absorbing straight into bad
  CHECK_FALSE(validate_model(m).empty());

  m = small_model();
  m.rows[0] = {{0, 1.0}};  // good state self-loop
  CHECK_FALSE(validate_model(m).empty());

  m = small_model();
  m.rows[1] = {{1, 1.0}};  // state 1 traps
  CHECK(has_rule(validate_model(m), "trap"));

  CHECK_THROWS_AS(require_valid(m), ModelError);
}

TEST_CASE("reachability helpers") {
  MarkovModel m = small_model();
  auto fwd = forward_reachable(m);
  CHECK(fwd == std::vector<bool>{true, true, true, true});

  auto bad = can_reach_bad(m);
  CHECK(bad[0]);  // a fresh excursion from 0 can still end badly
  CHECK(bad[1]);
  CHECK(bad[2]);
  CHECK(bad[3]);

  // cut state 2 off: nothing reaches the bad set any more
  m.rows[2] = {{0, 0.5}, {1, 0.5}};
  auto none = can_reach_bad(m);
  CHECK_FALSE(none[0]);
  CHECK_FALSE(none[1]);
  CHECK_FALSE(none[2]);
  CHECK(none[3]);
}

TEST_CASE("nominal and uniform-neighbor measures") {
  const MarkovModel m = small_model();
  const ChangeOfMeasure nom = nominal_measure(m);
  CHECK(nom.prob(1, 2) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(validate_measure(m, nom).empty());

  const ChangeOfMeasure uni = uniform_neighbor_measure(m);
  CHECK(uni.prob(2, 0) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(uni.prob(2, 1) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(uni.prob(2, 3) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(validate_measure(m, uni).empty());
}

TEST_CASE("support validation tracks edges a hit can use") {
  const MarkovModel m = small_model();

  // dropping the 1 -> 0 edge is fine: entering the good state ends the
  // excursion without a hit
  ChangeOfMeasure cm = nominal_measure(m);
  cm.rows[1] = {{2, 1.0}};
  CHECK(validate_measure(m, cm).empty());
  CHECK_NOTHROW(require_compatible(m, cm));

  // dropping 2 -> 3 removes the only route into the bad set
  cm = nominal_measure(m);
  cm.rows[2] = {{0, 0.5}, {1, 0.5}};
  const auto violations = validate_measure(m, cm);
  REQUIRE_FALSE(violations.empty());
  CHECK(violations[0].rule == "missing-support");
  CHECK_THROWS_AS(require_compatible(m, cm), SupportError);

  // non-stochastic measure row
  cm = nominal_measure(m);
  cm.rows[1] = {{0, 0.5}, {2, 0.4}};
  CHECK_FALSE(validate_measure(m, cm).empty());
}

TEST_CASE("as_model swaps rows and keeps kinds") {
  const MarkovModel m = small_model();
  ChangeOfMeasure cm = nominal_measure(m);
  cm.rows[1] = {{2, 1.0}};
  const MarkovModel swapped = as_model(m, cm);
  CHECK(swapped.prob(1, 2) == 1.0);
  CHECK(swapped.kinds == m.kinds);

  cm.rows.pop_back();
  CHECK_THROWS_AS(as_model(m, cm), SupportError);
}

TEST_CASE("path probability and likelihood ratios") {
  const MarkovModel m = build_mm1({0.8, 1.0, 5});
  const std::vector<StateId> path = {1, 2, 3};
  // two up-steps at p = 4/9 each
  CHECK(testsup::close(path_probability(m, path), 16.0 / 81.0, 1e-15, 0.0));

  const std::vector<StateId> broken = {1, 3};
  CHECK_THROWS_WITH_AS(path_probability(m, broken),
                       "invalid transition (1 -> 3) in path", ModelError);

  const ChangeOfMeasure nom = nominal_measure(m);
  const ChangeOfMeasure uni = uniform_neighbor_measure(m);
  // log LR of an up-up path: 2 * log( (4/9) / (1/2) )
  const double lr = log_likelihood_ratio(nom, uni, path);
  CHECK(testsup::close(lr, 2.0 * std::log((4.0 / 9.0) / 0.5), 1e-14, 0.0));
}

TEST_CASE("max_abs_diff walks the union of supports") {
  const MarkovModel m = small_model();
  const ChangeOfMeasure a = nominal_measure(m);
  ChangeOfMeasure b = nominal_measure(m);
  CHECK(max_abs_diff(a, b) == 0.0);

  b.rows[1] = {{0, 0.25}, {2, 0.75}};
  CHECK(max_abs_diff(a, b) == doctest::Approx(0.25).epsilon(1e-15));

  // an edge present on only one side counts at full weight
  b = nominal_measure(m);
  b.rows[1] = {{2, 1.0}};
  CHECK(max_abs_diff(a, b) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("random corpus models validate") {
  RngStream rng = RngStream::root(2024);
  for (int i = 0; i < 50; ++i) {
    RngStream sub = rng.substream(static_cast<std::uint64_t>(i));
    const MarkovModel m = testsup::random_model(sub);
    CHECK(validate_model(m).empty());
    double sum;
    for (StateId x = 0; x < m.n_states; ++x) {
      sum = 0.0;
      for (const Edge& e : m.rows[x]) sum += e.prob;
      CHECK(std::abs(sum - 1.0) <= 1e-15);
    }
  }
}
