#include "raresim/exact.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <queue>
#include <string>

#include "raresim/errors.hpp"

namespace raresim {

namespace {

constexpr double kResidualTol = 1e-10;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr StateId kMaxDense = 2000;

// dense index over a chosen subset of states
struct SubsetIndex {
  std::vector<StateId> states;  // ascending
  std::vector<int> pos;         // state -> dense index, -1 outside

  explicit SubsetIndex(StateId n) : pos(n, -1) {}
  void add(StateId x) {
    pos[x] = static_cast<int>(states.size());
    states.push_back(x);
  }
  int size() const { return static_cast<int>(states.size()); }
};

SubsetIndex index_of(const MarkovModel& model, const std::vector<bool>& keep) {
  SubsetIndex ix(model.n_states);
  for (StateId x = 0; x < model.n_states; ++x)
    if (model.internal(x) && keep[x]) ix.add(x);
  return ix;
}

SubsetIndex all_internal(const MarkovModel& model) {
  SubsetIndex ix(model.n_states);
  for (StateId x = 0; x < model.n_states; ++x)
    if (model.internal(x)) ix.add(x);
  return ix;
}

// internal block (I - Q) restricted to the subset
Eigen::MatrixXd system_matrix(const MarkovModel& model, const SubsetIndex& ix) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(ix.size(), ix.size());
  for (int i = 0; i < ix.size(); ++i)
    for (const Edge& e : model.rows[ix.states[i]]) {
      int j = ix.pos[e.to];
      if (j >= 0) a(i, j) -= e.prob;
    }
  return a;
}

// true when every in-subset edge connects dense neighbors, i.e. the internal
// block is tridiagonal in the subset ordering (birth-death structure)
bool tridiagonal_structure(const MarkovModel& model, const SubsetIndex& ix) {
  if (ix.size() == 0) return false;
  for (int i = 0; i < ix.size(); ++i)
    for (const Edge& e : model.rows[ix.states[i]]) {
      int j = ix.pos[e.to];
      if (j >= 0 && std::abs(i - j) > 1) return false;
    }
  return true;
}

// Thomas elimination of (I - Q) g = r for the tridiagonal internal block.
// All quantities stay positive for these substochastic systems, so the
// recursion is componentwise accurate.
std::vector<double> solve_tridiagonal(const MarkovModel& model, const SubsetIndex& ix,
                                      std::vector<double> rhs) {
  const int m = ix.size();
  std::vector<double> sub(m, 0.0), diag(m, 1.0), super(m, 0.0);
  for (int i = 0; i < m; ++i)
    for (const Edge& e : model.rows[ix.states[i]]) {
      int j = ix.pos[e.to];
      if (j < 0) continue;
      if (j == i - 1)
        sub[i] = -e.prob;
      else if (j == i)
        diag[i] -= e.prob;
      else if (j == i + 1)
        super[i] = -e.prob;
    }
  for (int i = 1; i < m; ++i) {
    if (std::abs(diag[i - 1]) < 1e-300)
      throw SolverError("tridiagonal elimination hit a zero pivot");
    const double w = sub[i] / diag[i - 1];
    diag[i] -= w * super[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  std::vector<double> g(m, 0.0);
  if (std::abs(diag[m - 1]) < 1e-300)
    throw SolverError("tridiagonal elimination hit a zero pivot");
  g[m - 1] = rhs[m - 1] / diag[m - 1];
  for (int i = m - 2; i >= 0; --i) g[i] = (rhs[i] - super[i] * g[i + 1]) / diag[i];
  return g;
}

double direct_bad_mass(const MarkovModel& model, StateId x) {
  double r = 0.0;
  for (const Edge& e : model.rows[x])
    if (model.bad(e.to)) r += e.prob;
  return r;
}

// Collects the positive terms p(x,y) * weight(y) and normalizes by their own
// sum rather than an externally supplied denominator, so the row is
// stochastic to machine precision. Returns an empty row when no term is
// positive; a single surviving edge gets probability exactly 1.
std::vector<Edge> weighted_row(const std::vector<Edge>& row, const std::vector<double>& weight,
                               double scale = 1.0) {
  std::vector<Edge> out;
  double total = 0.0;
  for (const Edge& e : row) {
    const double mass = scale * e.prob * weight[e.to];
    if (mass > 0.0) {
      out.push_back({e.to, mass});
      total += mass;
    }
  }
  if (out.size() == 1)
    out[0].prob = 1.0;
  else
    for (Edge& e : out) e.prob /= total;
  return out;
}

}  // namespace

HittingProbabilities hitting_probabilities(const MarkovModel& model, GammaSolver solver) {
  const auto to_bad = can_reach_bad(model);
  const SubsetIndex ix = index_of(model, to_bad);  // states with a positive value

  std::vector<double> rhs(ix.size(), 0.0);
  for (int i = 0; i < ix.size(); ++i) rhs[i] = direct_bad_mass(model, ix.states[i]);

  bool tri = tridiagonal_structure(model, ix);
  if (solver == GammaSolver::Tridiagonal && !tri)
    throw SolverError("model does not have birth-death structure");
  if (solver == GammaSolver::Dense) tri = false;

  std::vector<double> g;
  if (ix.size() > 0 && tri) {
    g = solve_tridiagonal(model, ix, rhs);
  } else if (ix.size() > 0) {
    if (ix.size() > kMaxDense)
      throw SolverError("internal block too large for the dense solver (" +
                        std::to_string(ix.size()) + " states)");
    Eigen::MatrixXd a = system_matrix(model, ix);
    Eigen::VectorXd b = Eigen::Map<Eigen::VectorXd>(rhs.data(), ix.size());
    Eigen::VectorXd x = Eigen::PartialPivLU<Eigen::MatrixXd>(a).solve(b);
    g.assign(x.data(), x.data() + ix.size());
  }

  HittingProbabilities hp;
  hp.value.assign(model.n_states, 0.0);
  for (StateId x = 0; x < model.n_states; ++x)
    if (model.bad(x)) hp.value[x] = 1.0;
  for (int i = 0; i < ix.size(); ++i) {
    double v = g[i];
    if (!std::isfinite(v)) throw SolverError("hitting-probability solve produced non-finite values");
    if (v < 0.0 || v > 1.0 + 1e-9) {
      if (v < -1e-9) throw SolverError("hitting-probability solve produced negative values");
      v = std::clamp(v, 0.0, 1.0);
    }
    hp.value[ix.states[i]] = v;
  }

  // the first-step equations double as the solver check
  double worst = 0.0;
  for (StateId x = 0; x < model.n_states; ++x) {
    if (!model.internal(x)) continue;
    double expect = 0.0;
    for (const Edge& e : model.rows[x]) expect += e.prob * hp.value[e.to];
    worst = std::max(worst, std::abs(hp.value[x] - expect));
  }
  if (worst > kResidualTol)
    throw SolverError("hitting-probability residual " + std::to_string(worst) +
                      " exceeds tolerance (singular or ill-conditioned system)");

  for (const Edge& e : model.rows[model.good_state()])
    hp.from_start += e.prob * hp.value[e.to];
  return hp;
}

// ---- fundamental matrix ----

struct FundamentalMatrix::Impl {
  SubsetIndex ix;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
  std::vector<double> u;  // per state
  mutable std::mutex mutex;
  mutable std::map<StateId, Eigen::VectorXd> columns;

  explicit Impl(const MarkovModel& chain) : ix(all_internal(chain)) {
    lu.compute(system_matrix(chain, ix));

    u.assign(chain.n_states, 0.0);
    Eigen::VectorXd r0 = Eigen::VectorXd::Zero(ix.size());
    for (const Edge& e : chain.rows[chain.good_state()]) {
      int j = ix.pos[e.to];
      if (j >= 0) r0[j] += e.prob;
    }
    if (ix.size() > 0) {
      // u' = r0' (I - Q)^-1, one transposed solve
      Eigen::VectorXd sol = lu.transpose().solve(r0);
      for (int i = 0; i < ix.size(); ++i) {
        double value = sol[i];
        if (!std::isfinite(value))
          throw SolverError("visit-count solve produced non-finite values (chain may "
                            "not be absorbing)");
        u[ix.states[i]] = std::max(value, 0.0);
      }
    }
    u[chain.good_state()] = 1.0;
    for (StateId x = 0; x < chain.n_states; ++x) {
      if (!chain.bad(x)) continue;
      double entries = chain.prob(chain.good_state(), x);
      for (int i = 0; i < ix.size(); ++i)
        entries += u[ix.states[i]] * chain.prob(ix.states[i], x);
      u[x] = entries;
    }
  }

  const Eigen::VectorXd& column(StateId y) const {
    std::scoped_lock lock(mutex);
    auto it = columns.find(y);
    if (it == columns.end()) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(ix.size());
      e[ix.pos[y]] = 1.0;
      it = columns.emplace(y, lu.solve(e)).first;
      if (!it->second.allFinite())
        throw SolverError("visit-count solve produced non-finite values");
    }
    return it->second;
  }
};

FundamentalMatrix::FundamentalMatrix(const MarkovModel& chain)
    : impl_(std::make_unique<Impl>(chain)) {}
FundamentalMatrix::~FundamentalMatrix() = default;
FundamentalMatrix::FundamentalMatrix(FundamentalMatrix&&) noexcept = default;
FundamentalMatrix& FundamentalMatrix::operator=(FundamentalMatrix&&) noexcept = default;

double FundamentalMatrix::visits_self(StateId x) const {
  if (impl_->ix.pos[x] < 0) return 1.0;
  return impl_->column(x)[impl_->ix.pos[x]];
}

double FundamentalMatrix::visits_from_start(StateId x) const { return impl_->u[x]; }

double FundamentalMatrix::reach(StateId from, StateId to) const {
  const int jt = impl_->ix.pos[to];
  if (jt < 0) throw ModelError("reach() targets must be internal states");
  const Eigen::VectorXd& col = impl_->column(to);
  const double vt = col[jt];
  if (from == to) return 1.0 - 1.0 / vt;
  const int jf = impl_->ix.pos[from];
  if (jf >= 0) return col[jf] / vt;
  if (from == 0) return impl_->u[to] / vt;  // from the good state
  return 0.0;                               // from an absorbing state
}

std::vector<double> FundamentalMatrix::all_visits_self() const {
  std::vector<double> v(impl_->u.size(), 1.0);
  if (impl_->ix.size() > 0) {
    Eigen::MatrixXd inverse =
        impl_->lu.solve(Eigen::MatrixXd::Identity(impl_->ix.size(), impl_->ix.size()));
    for (int i = 0; i < impl_->ix.size(); ++i) v[impl_->ix.states[i]] = inverse(i, i);
  }
  return v;
}

VisitQuantities visit_quantities(const MarkovModel& chain) {
  FundamentalMatrix fm(chain);
  VisitQuantities out;
  out.v = fm.all_visits_self();
  out.u.resize(chain.n_states);
  for (StateId x = 0; x < chain.n_states; ++x) out.u[x] = fm.visits_from_start(x);
  return out;
}

// ---- derived measures ----

ChangeOfMeasure zero_variance_measure(const MarkovModel& model,
                                      const HittingProbabilities& hp,
                                      FirstStep first_step) {
  ChangeOfMeasure m;
  m.rows = model.rows;

  const StateId start = model.good_state();
  if (first_step == FirstStep::Conditioned) {
    if (!(hp.from_start > 0.0))
      throw SolverError("hit probability is zero; cannot condition the first step");
    m.rows[start] = weighted_row(model.rows[start], hp.value);
  }

  for (StateId x = 0; x < model.n_states; ++x) {
    if (!model.internal(x)) continue;
    auto row = weighted_row(model.rows[x], hp.value);
    if (row.empty()) {
      if (hp.value[x] > kRowSumTol)
        throw SolverError("state " + std::to_string(x) +
                          " has a positive hitting probability but no successor does "
                          "(inconsistent input)");
      m.fallback_rows.push_back(x);  // unreachable under the new measure
      continue;
    }
    if (hp.value[x] <= 0.0)
      throw SolverError("state " + std::to_string(x) +
                        " has hitting probability zero but successors with positive "
                        "probability (inconsistent input)");
    m.rows[x] = std::move(row);
  }
  return m;
}

double expected_transition_count(const MarkovModel& model, const HittingProbabilities& hp,
                                 const FundamentalMatrix& fm, StateId x, StateId y) {
  if (!model.internal(x)) throw ModelError("expected_transition_count needs an internal source");
  return fm.visits_self(x) * model.prob(x, y) * hp.value[y];
}

double expected_transition_count(const MarkovModel& model, StateId x, StateId y) {
  return expected_transition_count(model, hitting_probabilities(model),
                                   FundamentalMatrix(model), x, y);
}

ChangeOfMeasure cross_entropy_measure_exact(const MarkovModel& model, FirstStep first_step) {
  const HittingProbabilities hp = hitting_probabilities(model);
  const FundamentalMatrix fm(model);

  ChangeOfMeasure m;
  m.rows = model.rows;
  const StateId start = model.good_state();
  if (model.rows[start].empty())
    throw ModelError("no internal state is reachable from the good state");

  // only one transition leaves the good state per excursion, so its expected
  // counts are p(0,y) * value(y); nonzero mass conditions the first step
  if (first_step == FirstStep::Conditioned) {
    auto row = weighted_row(model.rows[start], hp.value);
    if (row.empty())
      m.fallback_rows.push_back(start);
    else
      m.rows[start] = std::move(row);
  }

  for (StateId x = 0; x < model.n_states; ++x) {
    if (!model.internal(x)) continue;
    auto row = weighted_row(model.rows[x], hp.value, fm.visits_from_start(x));
    if (row.empty())
      m.fallback_rows.push_back(x);
    else
      m.rows[x] = std::move(row);
  }
  return m;
}

double kl_distance(const MarkovModel& model, const ChangeOfMeasure& reference,
                   const ChangeOfMeasure& candidate) {
  const FundamentalMatrix fm(as_model(model, reference));

  double d = 0.0;
  const StateId start = model.good_state();
  for (const Edge& e : reference.rows[start]) {
    if (e.prob <= 0.0) continue;
    const double c = candidate.prob(start, e.to);
    if (c <= 0.0) return kInf;
    d += e.prob * std::log(e.prob / c);
  }
  for (StateId x = 0; x < model.n_states; ++x) {
    if (!model.internal(x)) continue;
    const double ux = fm.visits_from_start(x);
    if (ux <= 0.0) continue;
    for (const Edge& e : reference.rows[x]) {
      if (e.prob <= 0.0) continue;
      const double c = candidate.prob(x, e.to);
      if (c <= 0.0) return kInf;
      d += ux * e.prob * std::log(e.prob / c);
    }
  }
  if (d < 0.0) {
    if (d < -1e-9) throw SolverError("KL distance came out negative; inconsistent input");
    d = 0.0;
  }
  return d;
}

double exact_second_moment(const MarkovModel& model, const ChangeOfMeasure& measure) {
  require_compatible(model, measure);

  const auto to_bad = can_reach_bad(model);
  const SubsetIndex ix = index_of(model, to_bad);
  const int m = ix.size();

  // tilted matrix B(z,w) = p(z,w)^2 / p*(z,w) on the states that matter
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  for (int i = 0; i < m; ++i) {
    const StateId z = ix.states[i];
    for (const Edge& e : model.rows[z]) {
      if (e.prob <= 0.0) continue;
      const double pm = measure.prob(z, e.to);
      if (model.bad(e.to)) {
        rhs[i] += e.prob * e.prob / pm;  // pm > 0 by the support check
      } else {
        const int j = ix.pos[e.to];
        if (j < 0) continue;  // leads away from the bad set, moment weight 0
        b(i, j) += e.prob * e.prob / pm;
      }
    }
  }

  double from_start = 0.0;
  std::vector<double> m2(model.n_states, 0.0);
  if (m > 0) {
    if (m > kMaxDense)
      throw SolverError("internal block too large for the dense solver");
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(Eigen::MatrixXd::Identity(m, m) - b);

    // convergence certificate: with B >= 0, a positive solution of
    // (I - B) w = 1 exists exactly when the tilted chain's spectral radius
    // is below 1; otherwise the second moment diverges
    Eigen::VectorXd w = lu.solve(Eigen::VectorXd::Ones(m));
    if (!w.allFinite() || w.minCoeff() < 0.999) return kInf;

    Eigen::VectorXd sol = lu.solve(rhs);
    if (!sol.allFinite() || sol.minCoeff() < -1e-12)
      throw SolverError("second-moment solve failed despite a convergent system");
    for (int i = 0; i < m; ++i) m2[ix.states[i]] = std::max(sol[i], 0.0);
  }

  const StateId start = model.good_state();
  for (const Edge& e : model.rows[start]) {
    if (e.prob <= 0.0) continue;
    const double value = model.bad(e.to) ? 1.0 : m2[e.to];
    if (value <= 0.0) continue;
    const double pm = measure.prob(start, e.to);
    from_start += e.prob * e.prob / pm * value;
  }
  return from_start;
}

double max_path_probability(const MarkovModel& model, StateId x) {
  if (x < 0 || x >= model.n_states || !model.internal(x))
    throw ModelError("max_path_probability starts from an internal state");

  std::vector<double> dist(model.n_states, kInf);
  using Item = std::pair<double, StateId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[x] = 0.0;
  heap.push({0.0, x});
  double best = kInf;

  while (!heap.empty()) {
    auto [d, s] = heap.top();
    heap.pop();
    if (d > dist[s] || d >= best) continue;
    for (const Edge& e : model.rows[s]) {
      if (e.prob <= 0.0) continue;
      const double nd = d - std::log(e.prob);
      if (model.bad(e.to)) {
        best = std::min(best, nd);
      } else if (model.internal(e.to) && nd < dist[e.to]) {
        dist[e.to] = nd;
        heap.push({nd, e.to});
      }
    }
  }
  return std::isfinite(best) ? std::exp(-best) : 0.0;
}

ExactReport exact_report(const MarkovModel& model, FirstStep first_step) {
  ExactReport report;
  report.hp = hitting_probabilities(model);
  report.zero_variance = zero_variance_measure(model, report.hp, first_step);
  report.cross_entropy = cross_entropy_measure_exact(model, first_step);
  report.visits = visit_quantities(model);
  report.max_measure_diff = max_abs_diff(report.zero_variance, report.cross_entropy);

  const ChangeOfMeasure nominal = nominal_measure(model);
  const ChangeOfMeasure uniform = uniform_neighbor_measure(model);
  report.kl_to.emplace_back("nominal", kl_distance(model, report.zero_variance, nominal));
  report.kl_to.emplace_back("uniform_neighbor",
                            kl_distance(model, report.zero_variance, uniform));
  report.kl_to.emplace_back("cross_entropy_exact",
                            kl_distance(model, report.zero_variance, report.cross_entropy));
  report.second_moment_nominal = exact_second_moment(model, nominal);
  report.second_moment_zero_variance = exact_second_moment(model, report.zero_variance);
  return report;
}

}  // namespace raresim
