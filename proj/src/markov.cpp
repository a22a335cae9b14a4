#include "raresim/markov.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

#include "raresim/errors.hpp"

namespace raresim {

namespace {

double row_prob(const std::vector<Edge>& row, StateId y) {
  auto it = std::lower_bound(row.begin(), row.end(), y,
                             [](const Edge& e, StateId t) { return e.to < t; });
  return (it != row.end() && it->to == y) ? it->prob : 0.0;
}

std::string join_messages(const std::vector<Violation>& violations) {
  std::ostringstream out;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) out << "; ";
    out << violations[i].message;
  }
  return out.str();
}

void check_rows(const TransitionRows& rows, StateId n_states, const char* what,
                const char* sum_rule, std::vector<Violation>& out) {
  for (StateId x = 0; x < n_states; ++x) {
    const auto& row = rows[x];
    double sum = 0.0;
    StateId prev = -1;
    bool shape_ok = true;
    for (const Edge& e : row) {
      if (e.to < 0 || e.to >= n_states) {
        out.push_back({"edge-out-of-range", x,
                       "state " + std::to_string(x) + ": edge target " +
                           std::to_string(e.to) + " out of range"});
        shape_ok = false;
        break;
      }
      if (e.to <= prev) {
        out.push_back({"row-malformed", x,
                       "state " + std::to_string(x) +
                           ": row not sorted by target or duplicate target " +
                           std::to_string(e.to)});
        shape_ok = false;
        break;
      }
      prev = e.to;
      if (!(e.prob >= 0.0) || e.prob > 1.0 || !std::isfinite(e.prob)) {
        out.push_back({"prob-out-of-range", x,
                       "state " + std::to_string(x) + ": probability of edge to " +
                           std::to_string(e.to) + " outside [0, 1]"});
        shape_ok = false;
        break;
      }
      sum += e.prob;
    }
    if (!shape_ok) continue;
    if (std::abs(sum - 1.0) > kRowSumTol) {
      std::ostringstream msg;
      msg << what << " row " << x << " sums to " << sum << " (deficit " << (1.0 - sum)
          << "), not stochastic";
      out.push_back({sum_rule, x, msg.str()});
    }
  }
}

}  // namespace

double MarkovModel::prob(StateId x, StateId y) const { return row_prob(rows[x], y); }

std::vector<StateId> MarkovModel::internal_states() const {
  std::vector<StateId> out;
  for (StateId x = 0; x < n_states; ++x)
    if (internal(x)) out.push_back(x);
  return out;
}

std::vector<StateId> MarkovModel::bad_states() const {
  std::vector<StateId> out;
  for (StateId x = 0; x < n_states; ++x)
    if (bad(x)) out.push_back(x);
  return out;
}

double ChangeOfMeasure::prob(StateId x, StateId y) const { return row_prob(rows[x], y); }

std::vector<Violation> validate_model(const MarkovModel& model) {
  std::vector<Violation> out;
  const StateId n = model.n_states;
  if (n < 2) {
    out.push_back({"too-few-states", -1, "model needs at least two states"});
    return out;
  }
  if (model.rows.size() != static_cast<std::size_t>(n) ||
      model.kinds.size() != static_cast<std::size_t>(n)) {
    out.push_back({"shape-mismatch", -1, "rows/kinds do not match the state count"});
    return out;
  }

  int good = 0, bad = 0;
  for (StateId x = 0; x < n; ++x) {
    if (model.kinds[x] == StateKind::Good) ++good;
    if (model.kinds[x] == StateKind::Bad) ++bad;
  }
  if (good != 1 || model.kinds[0] != StateKind::Good)
    out.push_back({"good-state", -1,
                   "exactly one good state is required and it must be state 0"});
  if (bad < 1) out.push_back({"no-bad-state", -1, "at least one bad state is required"});
  if (!out.empty()) return out;

  check_rows(model.rows, n, "model", "row-not-stochastic", out);

  for (const Edge& e : model.rows[0]) {
    if (e.prob <= 0.0) continue;
    if (e.to == 0)
      out.push_back({"good-self-loop", 0, "good state must leave itself each step"});
    else if (model.bad(e.to))
      out.push_back({"good-to-bad", 0,
                     "good state jumps to bad state " + std::to_string(e.to) +
                         " directly"});
  }

  // no internal state may be trapped away from the absorbing set
  std::vector<std::vector<StateId>> reverse(n);
  for (StateId x = 0; x < n; ++x)
    for (const Edge& e : model.rows[x])
      if (e.prob > 0.0 && e.to >= 0 && e.to < n) reverse[e.to].push_back(x);
  std::vector<bool> reaches(n, false);
  std::deque<StateId> queue;
  for (StateId x = 0; x < n; ++x)
    if (model.absorbing(x)) {
      reaches[x] = true;
      queue.push_back(x);
    }
  while (!queue.empty()) {
    StateId y = queue.front();
    queue.pop_front();
    for (StateId x : reverse[y])
      if (!reaches[x]) {
        reaches[x] = true;
        queue.push_back(x);
      }
  }
  for (StateId x = 0; x < n; ++x)
    if (model.internal(x) && !reaches[x])
      out.push_back({"trap", x,
                     "state " + std::to_string(x) +
                         " cannot reach the good or bad set (trap)"});
  return out;
}

void require_valid(const MarkovModel& model) {
  auto violations = validate_model(model);
  if (!violations.empty()) throw ModelError("invalid model: " + join_messages(violations));
}

std::vector<Violation> validate_measure(const MarkovModel& model,
                                        const ChangeOfMeasure& measure) {
  std::vector<Violation> out;
  const StateId n = model.n_states;
  if (measure.rows.size() != static_cast<std::size_t>(n)) {
    out.push_back({"shape-mismatch", -1, "measure rows do not match the state count"});
    return out;
  }
  check_rows(measure.rows, n, "measure", "measure-row-not-stochastic", out);

  // absolute continuity on every edge that can sit on a good -> bad path
  auto from_start = forward_reachable(model);
  auto to_bad = can_reach_bad(model);
  for (StateId x = 0; x < n; ++x) {
    if (!from_start[x] || model.bad(x)) continue;
    if (model.internal(x) || x == model.good_state()) {
      for (const Edge& e : model.rows[x]) {
        // an edge is required only if a bad-hitting excursion can use it;
        // entering the good state ends the excursion without a hit
        if (e.prob <= 0.0 || !to_bad[e.to] || e.to == model.good_state()) continue;
        if (measure.prob(x, e.to) <= 0.0)
          out.push_back({"missing-support", x,
                         "measure gives zero probability to required edge " +
                             std::to_string(x) + " -> " + std::to_string(e.to)});
      }
    }
  }
  return out;
}

void require_compatible(const MarkovModel& model, const ChangeOfMeasure& measure) {
  auto violations = validate_measure(model, measure);
  if (!violations.empty())
    throw SupportError("incompatible measure: " + join_messages(violations));
}

ChangeOfMeasure nominal_measure(const MarkovModel& model) {
  return ChangeOfMeasure{model.rows, {}};
}

ChangeOfMeasure uniform_neighbor_measure(const MarkovModel& model) {
  ChangeOfMeasure m;
  m.rows.resize(model.rows.size());
  for (std::size_t x = 0; x < model.rows.size(); ++x) {
    int support = 0;
    for (const Edge& e : model.rows[x])
      if (e.prob > 0.0) ++support;
    if (support == 0) continue;
    const double w = 1.0 / support;
    for (const Edge& e : model.rows[x])
      if (e.prob > 0.0) m.rows[x].push_back({e.to, w});
  }
  return m;
}

MarkovModel as_model(const MarkovModel& model, const ChangeOfMeasure& measure) {
  if (measure.rows.size() != static_cast<std::size_t>(model.n_states))
    throw SupportError("measure shape does not match the model");
  return MarkovModel{model.n_states, measure.rows, model.kinds};
}

std::vector<bool> forward_reachable(const MarkovModel& model) {
  std::vector<bool> seen(model.n_states, false);
  std::deque<StateId> queue;
  seen[model.good_state()] = true;
  queue.push_back(model.good_state());
  while (!queue.empty()) {
    StateId x = queue.front();
    queue.pop_front();
    for (const Edge& e : model.rows[x]) {
      if (e.prob <= 0.0 || seen[e.to]) continue;
      seen[e.to] = true;
      // paths stop on entering the good-or-bad set, so only internal states expand
      if (model.internal(e.to)) queue.push_back(e.to);
    }
  }
  return seen;
}

std::vector<bool> can_reach_bad(const MarkovModel& model) {
  const StateId n = model.n_states;
  std::vector<std::vector<StateId>> reverse(n);
  for (StateId x = 0; x < n; ++x) {
    if (!model.internal(x) && x != model.good_state()) continue;
    for (const Edge& e : model.rows[x])
      if (e.prob > 0.0) reverse[e.to].push_back(x);
  }
  std::vector<bool> flag(n, false);
  std::deque<StateId> queue;
  for (StateId x = 0; x < n; ++x)
    if (model.bad(x)) {
      flag[x] = true;
      queue.push_back(x);
    }
  while (!queue.empty()) {
    StateId y = queue.front();
    queue.pop_front();
    for (StateId x : reverse[y]) {
      if (flag[x]) continue;
      flag[x] = true;
      if (model.internal(x)) queue.push_back(x);
      // the good state is flagged but never expanded: an excursion cannot
      // pass through it
    }
  }
  return flag;
}

double path_probability(const MarkovModel& model, std::span<const StateId> states) {
  double product = 1.0;
  for (std::size_t i = 0; i + 1 < states.size(); ++i) {
    StateId a = states[i], b = states[i + 1];
    if (a < 0 || a >= model.n_states || b < 0 || b >= model.n_states)
      throw ModelError("path mentions state outside the model");
    double p = model.prob(a, b);
    if (p <= 0.0)
      throw ModelError("invalid transition (" + std::to_string(a) + " -> " +
                       std::to_string(b) + ") in path");
    product *= p;
  }
  return product;
}

double log_likelihood_ratio(const ChangeOfMeasure& a, const ChangeOfMeasure& b,
                            std::span<const StateId> states) {
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < states.size(); ++i)
    sum += std::log(a.prob(states[i], states[i + 1]) / b.prob(states[i], states[i + 1]));
  return sum;
}

double max_abs_diff(const ChangeOfMeasure& a, const ChangeOfMeasure& b) {
  const std::size_t n = std::max(a.rows.size(), b.rows.size());
  double worst = 0.0;
  for (std::size_t x = 0; x < n; ++x) {
    const std::vector<Edge>* ra = x < a.rows.size() ? &a.rows[x] : nullptr;
    const std::vector<Edge>* rb = x < b.rows.size() ? &b.rows[x] : nullptr;
    std::size_t i = 0, j = 0;
    while ((ra && i < ra->size()) || (rb && j < rb->size())) {
      StateId ta = (ra && i < ra->size()) ? (*ra)[i].to : std::numeric_limits<StateId>::max();
      StateId tb = (rb && j < rb->size()) ? (*rb)[j].to : std::numeric_limits<StateId>::max();
      double pa = 0.0, pb = 0.0;
      if (ta <= tb) pa = (*ra)[i++].prob;
      if (tb <= ta) pb = (*rb)[j++].prob;
      worst = std::max(worst, std::abs(pa - pb));
    }
  }
  return worst;
}

}  // namespace raresim
