#pragma once

#include <cstdint>
#include <vector>

#include "raresim/exact.hpp"
#include "raresim/markov.hpp"
#include "raresim/rng.hpp"
#include "raresim/sampling.hpp"

namespace raresim {

// Results of an importance-sampling run. Moments are population-style
// (divide by the replication count). The variance comes from a centered
// second pass, not from second_moment - mean^2, so it stays meaningful for
// measures whose weights barely vary. Two relative-error conventions are
// reported side by side:
//   relative_error = sqrt(variance / replications) / mean  (error of the mean)
//   cv             = sqrt(variance) / mean                 (per-replication)
struct EstimatorReport {
  double mean = 0.0;
  double second_moment = 0.0;
  double variance = 0.0;
  double relative_error = 0.0;
  double cv = 0.0;
  double rat = 0.0;             // log second_moment / log mean; 2 is the ideal
  double ci95_halfwidth = 0.0;  // normal approximation
  std::int64_t replications = 0;
  std::uint64_t seed = 0;       // stamped by the caller
  std::int64_t hits = 0;
  bool zero_hits = false;
  bool ci_reliable = true;      // false when hits < 30
};

// Runs `replications` independent paths under `measure`; replication r draws
// from stream.substream(r). The reduction uses fixed-size chunks with
// pairwise summation, so the report is bit-identical for any `threads`.
// Throws SupportError when the measure misses required support.
EstimatorReport estimate(const MarkovModel& model, const ChangeOfMeasure& measure,
                         std::int64_t replications, const RngStream& stream,
                         int threads = 1, const SamplerLimits& limits = {});

// The exact quantities that govern whether a trained measure stays efficient
// as the event gets rarer: the KL distance to the zero-variance measure, and
// the moment ratio computed from exact moments (2 at the optimum, 1 for the
// nominal model).
struct OptimalityDiagnostics {
  double kl = 0.0;
  double log_pa = 0.0;               // log of the exact hit probability
  double kl_over_abs_log_pa = 0.0;
  double rat = 0.0;                  // from exact second moment
  double rat_estimated = 0.0;        // from the report's sampled moments
  double exact_pa = 0.0;
};

OptimalityDiagnostics optimality_check(const MarkovModel& model,
                                       const ChangeOfMeasure& trained,
                                       const EstimatorReport& report);

}  // namespace raresim
