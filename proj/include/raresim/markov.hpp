#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace raresim {

using StateId = std::int32_t;

// Every state is exactly one of: the good state (start/regeneration point),
// a bad state (the rare set), or internal. State 0 is reserved for the good
// state by convention; there is exactly one good state.
enum class StateKind : std::uint8_t { Good, Bad, Internal };

struct Edge {
  StateId to = 0;
  double prob = 0.0;
};

// Sparse row storage: rows[x] holds x's outgoing edges sorted by target,
// no duplicate targets.
using TransitionRows = std::vector<std::vector<Edge>>;

// Rows must sum to 1 within this tolerance; we refuse to renormalize.
inline constexpr double kRowSumTol = 1e-12;

struct MarkovModel {
  StateId n_states = 0;
  TransitionRows rows;
  std::vector<StateKind> kinds;

  StateId good_state() const { return 0; }
  bool absorbing(StateId x) const { return kinds[x] != StateKind::Internal; }
  bool internal(StateId x) const { return kinds[x] == StateKind::Internal; }
  bool bad(StateId x) const { return kinds[x] == StateKind::Bad; }

  // transition probability, 0 when the edge is absent
  double prob(StateId x, StateId y) const;

  std::vector<StateId> internal_states() const;
  std::vector<StateId> bad_states() const;
};

// A sampling measure over the same states as a model. Rows follow the same
// storage rules; rows for the good/bad states are normally copied from the
// model. fallback_rows lists rows that could not be derived from their
// defining formula or from data and were carried over instead.
struct ChangeOfMeasure {
  TransitionRows rows;
  std::vector<StateId> fallback_rows;

  double prob(StateId x, StateId y) const;
};

struct Violation {
  std::string rule;   // short identifier, e.g. "row-not-stochastic"
  StateId state;      // offending state, -1 for model-wide rules
  std::string message;
};

// Structural checks: partition shape, sorted rows, probabilities in range,
// rows stochastic within kRowSumTol, good-state constraints (no self loop,
// no direct jump to the bad set), and no internal state trapped away from
// the absorbing set.
std::vector<Violation> validate_model(const MarkovModel& model);

// Throws ModelError listing every violation.
void require_valid(const MarkovModel& model);

// Measure checks against a model: shape, stochastic rows, and absolute
// continuity (positive measure probability on every model edge that lies on
// a path from the good state to the bad set).
std::vector<Violation> validate_measure(const MarkovModel& model,
                                        const ChangeOfMeasure& measure);

// Throws SupportError listing every violation.
void require_compatible(const MarkovModel& model, const ChangeOfMeasure& measure);

// The model's own rows as a measure (sampling under it gives weight 1).
ChangeOfMeasure nominal_measure(const MarkovModel& model);

// Uniform over each row's support; the default starting point for training.
ChangeOfMeasure uniform_neighbor_measure(const MarkovModel& model);

// A model whose dynamics are the measure's rows (same states and partition).
// Shape-checked only; used to compute visit statistics under a measure.
MarkovModel as_model(const MarkovModel& model, const ChangeOfMeasure& measure);

// reachable[x]: x can be visited by a path that starts at the good state and
// passes only through internal states before x.
std::vector<bool> forward_reachable(const MarkovModel& model);

// flag[x]: from x the bad set can be reached through internal states only.
// Bad states are flagged; the good state is flagged when a first step can
// start such a path.
std::vector<bool> can_reach_bad(const MarkovModel& model);

// Product of transition probabilities along a state sequence. Throws
// ModelError naming the pair on the first missing or zero-probability edge.
double path_probability(const MarkovModel& model, std::span<const StateId> states);

// Sum over consecutive pairs of log(a(x,y) / b(x,y)). The sequence should be
// a path with positive probability under b.
double log_likelihood_ratio(const ChangeOfMeasure& a, const ChangeOfMeasure& b,
                            std::span<const StateId> states);

// Largest entrywise difference over the union of supports of all rows.
double max_abs_diff(const ChangeOfMeasure& a, const ChangeOfMeasure& b);

}  // namespace raresim
