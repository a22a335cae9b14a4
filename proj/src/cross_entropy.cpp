#include "raresim/cross_entropy.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "raresim/errors.hpp"

namespace raresim {

namespace {

// Likelihood-weighted transition frequencies over the paths that reached the
// bad set. Each path contributes weight * count to its (from, to) buckets;
// the row denominator is the sum of that row's buckets, so finalized rows
// are stochastic to machine precision.
class CeAccumulator {
 public:
  explicit CeAccumulator(const MarkovModel& model)
      : model_(model), num_(model.n_states) {}

  void add(const SamplePath& path) {
    ++total_;
    if (!path.hit_bad) return;
    ++hits_;
    const double w = std::exp(path.log_weight);
    wsum_ += w;
    wsq_ += w * w;
    for (const TransitionCount& t : path.counts)
      num_[t.from][t.to] += w * static_cast<double>(t.count);
  }

  int hits() const { return hits_; }

  // effective sample size of the hit weights: (sum w)^2 / sum w^2
  double ess() const { return wsq_ > 0.0 ? wsum_ * wsum_ / wsq_ : 0.0; }

  // Rows with no observed mass carry the previous measure's row and are
  // recorded in fallback_rows. smoothing < 1 blends toward the previous row
  // over the union of both supports.
  ChangeOfMeasure finalize(const ChangeOfMeasure& previous, double smoothing) const {
    ChangeOfMeasure out;
    out.rows.resize(num_.size());
    for (StateId x = 0; x < static_cast<StateId>(num_.size()); ++x) {
      const auto& buckets = num_[x];
      double total = 0.0;
      for (const auto& [to, mass] : buckets) total += mass;
      if (total <= 0.0) {
        out.rows[x] = previous.rows[x];
        // absorbing rows never receive counts; only carried decision rows
        // are worth flagging
        if (!model_.absorbing(x)) out.fallback_rows.push_back(x);
        continue;
      }
      std::vector<Edge>& row = out.rows[x];
      if (buckets.size() == 1) {
        row.push_back({buckets.begin()->first, 1.0});
      } else {
        for (const auto& [to, mass] : buckets)
          if (mass > 0.0) row.push_back({to, mass / total});
      }
      if (smoothing < 1.0) row = blend(row, previous.rows[x], smoothing);
    }
    return out;
  }

 private:
  static std::vector<Edge> blend(const std::vector<Edge>& fresh,
                                 const std::vector<Edge>& prev, double alpha) {
    std::map<StateId, double> mix;
    for (const Edge& e : fresh) mix[e.to] += alpha * e.prob;
    for (const Edge& e : prev) mix[e.to] += (1.0 - alpha) * e.prob;
    std::vector<Edge> row;
    for (const auto& [to, p] : mix)
      if (p > 0.0) row.push_back({to, p});
    return row;
  }

  const MarkovModel& model_;
  std::int64_t total_ = 0;
  int hits_ = 0;
  double wsum_ = 0.0;
  double wsq_ = 0.0;
  std::vector<std::map<StateId, double>> num_;
};

ChangeOfMeasure initial_measure(const MarkovModel& model, const CeConfig& config) {
  switch (config.initial) {
    case InitialMeasure::UniformNeighbor:
      return uniform_neighbor_measure(model);
    case InitialMeasure::Nominal:
      return nominal_measure(model);
    case InitialMeasure::UserSupplied:
      return config.user_initial;
  }
  throw ModelError("unknown initial measure");
}

void check_config(const CeConfig& config) {
  if (config.samples_per_iteration < 1)
    throw ModelError("samples_per_iteration must be positive");
  if (config.max_iterations < 1) throw ModelError("max_iterations must be positive");
  if (!(config.convergence_norm >= 0.0))
    throw ModelError("convergence_norm must be non-negative");
  if (!(config.smoothing > 0.0 && config.smoothing <= 1.0))
    throw ModelError("smoothing must lie in (0, 1]");
  if (!(config.ess_floor >= 0.0)) throw ModelError("ess_floor must be non-negative");
}

}  // namespace

ChangeOfMeasure ce_update(const MarkovModel& model, std::span<const SamplePath> paths,
                          const ChangeOfMeasure& previous, double smoothing) {
  CeAccumulator acc(model);
  for (const SamplePath& path : paths) acc.add(path);
  if (acc.hits() == 0)
    throw CeDegeneracy("no sampled path reached the bad set; the update is undefined "
                       "(increase the sample count or start from a broader measure)",
                       CeTrace{});
  return acc.finalize(previous, smoothing);
}

CeResult ce_train(const MarkovModel& model, const CeConfig& config, const RngStream& rng) {
  check_config(config);
  require_valid(model);

  ChangeOfMeasure measure = initial_measure(model, config);
  require_compatible(model, measure);

  CeTrace trace;
  for (int iteration = 0; iteration < config.max_iterations; ++iteration) {
    RngStream iteration_stream = rng.substream(static_cast<std::uint64_t>(iteration));
    CeAccumulator acc(model);
    for (int i = 0; i < config.samples_per_iteration; ++i) {
      RngStream path_stream = iteration_stream.substream(static_cast<std::uint64_t>(i));
      acc.add(sample_path(model, measure, path_stream, config.limits));
    }
    if (acc.hits() == 0)
      throw CeDegeneracy("iteration " + std::to_string(iteration) +
                             ": no sampled path reached the bad set (increase the "
                             "sample count or start from a broader measure)",
                         trace);

    ChangeOfMeasure updated = acc.finalize(measure, config.smoothing);
    require_compatible(model, updated);

    CeIteration record;
    record.iteration = iteration;
    record.hits = acc.hits();
    record.ess = acc.ess();
    record.matrix_diff_norm = max_abs_diff(measure, updated);
    record.measure = updated;
    record.carried_rows = updated.fallback_rows;
    trace.iterations.push_back(record);

    if (acc.ess() < config.ess_floor)
      throw CeDegeneracy("iteration " + std::to_string(iteration) +
                             ": effective sample size " + std::to_string(acc.ess()) +
                             " fell below the floor of " + std::to_string(config.ess_floor) +
                             " (weights degenerate; use more samples per iteration "
                             "or smoothing)",
                         trace);

    measure = std::move(updated);
    if (record.matrix_diff_norm < config.convergence_norm) break;
  }
  return CeResult{std::move(measure), std::move(trace)};
}

}  // namespace raresim
