#pragma once

#include <cstdint>
#include <vector>

#include "raresim/markov.hpp"
#include "raresim/rng.hpp"

namespace raresim {

struct TransitionCount {
  StateId from = 0;
  StateId to = 0;
  std::int64_t count = 0;
};

// One sampled excursion: starts at the good state, ends on the first entry
// into the good-or-bad set. log_weight is the log likelihood ratio of the
// nominal model against the sampling measure along the path, so
// exp(log_weight) turns an indicator into an unbiased estimate.
struct SamplePath {
  std::vector<StateId> states;            // visited states, first is good
  bool hit_bad = false;                   // ended in the bad set
  std::vector<TransitionCount> counts;    // per-edge counts, sorted by (from, to)
  double log_weight = 0.0;                // 0 when sampling under the model itself

  std::int64_t steps() const { return static_cast<std::int64_t>(states.size()) - 1; }
};

struct SamplerLimits {
  std::int64_t max_steps = 10'000'000;
};

// Draws one path under `measure` via inverse-transform sampling of each row.
// Throws SamplingError on a dead row or when the step cap is hit.
SamplePath sample_path(const MarkovModel& model, const ChangeOfMeasure& measure,
                       RngStream& rng, const SamplerLimits& limits = {});

}  // namespace raresim
