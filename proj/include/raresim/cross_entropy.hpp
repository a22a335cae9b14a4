#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "raresim/markov.hpp"
#include "raresim/rng.hpp"
#include "raresim/sampling.hpp"

namespace raresim {

enum class InitialMeasure { UniformNeighbor, Nominal, UserSupplied };

struct CeConfig {
  int samples_per_iteration = 2000;
  int max_iterations = 10;
  double convergence_norm = 1e-3;  // stop when the update moves less than this
  double smoothing = 1.0;          // blend weight on the new matrix; 1 = replace
  InitialMeasure initial = InitialMeasure::UniformNeighbor;
  ChangeOfMeasure user_initial;    // used when initial == UserSupplied
  double ess_floor = 5.0;          // abort when weighted hits degenerate below this
  SamplerLimits limits;
};

struct CeIteration {
  int iteration = 0;
  int hits = 0;                    // paths that reached the bad set
  double ess = 0.0;                // effective sample size of the hit weights
  double matrix_diff_norm = 0.0;   // max-norm step from the previous measure
  ChangeOfMeasure measure;         // measure after this iteration's update
  std::vector<StateId> carried_rows;  // rows kept from the previous measure
};

struct CeTrace {
  std::vector<CeIteration> iterations;
};

struct CeResult {
  ChangeOfMeasure measure;
  CeTrace trace;
};

// Raised when an iteration sees no hits, or the hit weights collapse. Carries
// the trace accumulated so far, so a caller can see how training degenerated.
class CeDegeneracy : public std::runtime_error {
 public:
  CeDegeneracy(const std::string& what, CeTrace trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const CeTrace& trace() const { return trace_; }

 private:
  CeTrace trace_;
};

// One update step: the likelihood-weighted empirical transition frequencies
// over the paths that hit the bad set. Rows that saw no weighted mass keep
// `previous`'s row and are listed in fallback_rows. smoothing < 1 blends the
// new matrix into the previous one entrywise. Throws CeDegeneracy when no
// path hits.
ChangeOfMeasure ce_update(const MarkovModel& model, std::span<const SamplePath> paths,
                          const ChangeOfMeasure& previous, double smoothing = 1.0);

// Iterates ce_update from the configured initial measure, sampling
// samples_per_iteration paths per round under the current measure. Path i of
// iteration j draws from rng.substream(j, i), so traces are reproducible for
// a fixed seed regardless of scheduling. Stops on convergence_norm or
// max_iterations; throws CeDegeneracy (with trace) on no hits or when the
// effective sample size falls below ess_floor.
CeResult ce_train(const MarkovModel& model, const CeConfig& config, const RngStream& rng);

}  // namespace raresim
