#include "raresim/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "raresim/errors.hpp"

namespace raresim {

namespace {

void build_counts(SamplePath& path) {
  std::vector<std::uint64_t> keys;
  keys.reserve(path.states.size());
  for (std::size_t i = 0; i + 1 < path.states.size(); ++i)
    keys.push_back((static_cast<std::uint64_t>(path.states[i]) << 32) |
                   static_cast<std::uint32_t>(path.states[i + 1]));
  std::sort(keys.begin(), keys.end());
  for (std::size_t i = 0; i < keys.size();) {
    std::size_t j = i;
    while (j < keys.size() && keys[j] == keys[i]) ++j;
    path.counts.push_back({static_cast<StateId>(keys[i] >> 32),
                           static_cast<StateId>(keys[i] & 0xffffffffu),
                           static_cast<std::int64_t>(j - i)});
    i = j;
  }
}

}  // namespace

SamplePath sample_path(const MarkovModel& model, const ChangeOfMeasure& measure,
                       RngStream& rng, const SamplerLimits& limits) {
  SamplePath path;
  StateId x = model.good_state();
  path.states.push_back(x);
  std::int64_t steps = 0;

  for (;;) {
    const auto& row = measure.rows[x];
    const double u = rng.uniform01();
    double acc = 0.0;
    const Edge* chosen = nullptr;
    const Edge* last_positive = nullptr;
    for (const Edge& e : row) {
      if (e.prob <= 0.0) continue;
      last_positive = &e;
      acc += e.prob;
      if (u < acc) {
        chosen = &e;
        break;
      }
    }
    if (!chosen) {
      // rounding can leave u just past the accumulated total
      if (!last_positive)
        throw SamplingError("state " + std::to_string(x) +
                            " has no outgoing probability under the sampling measure");
      chosen = last_positive;
    }

    // ratio is exactly 1 when the measure row equals the model row, keeping
    // the weight of nominal sampling at exactly 0
    path.log_weight += std::log(model.prob(x, chosen->to) / chosen->prob);
    x = chosen->to;
    path.states.push_back(x);
    ++steps;
    if (model.absorbing(x)) break;
    if (steps >= limits.max_steps)
      throw SamplingError("path exceeded the step cap of " +
                          std::to_string(limits.max_steps));
  }

  path.hit_bad = model.bad(x);
  build_counts(path);
  return path;
}

}  // namespace raresim
