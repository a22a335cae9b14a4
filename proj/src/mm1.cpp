#include "raresim/mm1.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "raresim/errors.hpp"
#include "raresim/estimator.hpp"
#include "raresim/exact.hpp"

namespace raresim {

namespace {

double log_sigma(const Mm1Params& params) { return std::log(params.sigma()); }

// one KL edge term, with the usual conventions: a zero reference probability
// contributes nothing, a zero candidate probability under a used edge makes
// the distance infinite
double kl_term(double ref, double cand) {
  if (ref <= 0.0) return 0.0;
  if (cand <= 0.0) return std::numeric_limits<double>::infinity();
  return ref * std::log(ref / cand);
}

}  // namespace

void Mm1Params::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw ModelError("lambda must be positive and finite");
  if (!(mu > 0.0) || !std::isfinite(mu)) throw ModelError("mu must be positive and finite");
  if (!(lambda < mu))
    throw ModelError("lambda must be smaller than mu (overflow must be the rare event)");
  if (n < 2) throw ModelError("the overflow level must be at least 2");
}

MarkovModel build_mm1(const Mm1Params& params) {
  params.validate();
  MarkovModel model;
  model.n_states = params.n + 1;
  model.rows.resize(model.n_states);
  model.kinds.assign(model.n_states, StateKind::Internal);
  model.kinds[0] = StateKind::Good;
  model.kinds[params.n] = StateKind::Bad;

  model.rows[0] = {{1, 1.0}};  // an empty queue can only receive an arrival
  const double p = params.p(), q = params.q();
  for (StateId x = 1; x < params.n; ++x) model.rows[x] = {{x - 1, q}, {x + 1, p}};
  model.rows[params.n] = {{static_cast<StateId>(params.n), 1.0}};
  return model;
}

double mm1_hit_probability(const Mm1Params& params, int x) {
  params.validate();
  if (x < 0 || x > params.n) throw ModelError("level outside the model");
  // (sigma^x - 1) / (sigma^n - 1), kept accurate for sigma near 1
  const double len = log_sigma(params);
  return std::expm1(x * len) / std::expm1(params.n * len);
}

std::pair<double, double> mm1_zero_variance_row(const Mm1Params& params, int x) {
  params.validate();
  if (x < 1 || x > params.n - 1) throw ModelError("level is not internal");
  const double len = log_sigma(params);
  // down = q * gamma(x-1) / gamma(x); up picks up the rest exactly
  const double down = params.q() * std::expm1((x - 1) * len) / std::expm1(x * len);
  return {1.0 - down, down};
}

std::vector<double> mm1_zero_variance_visits(const Mm1Params& params) {
  params.validate();
  const int n = params.n;
  std::vector<double> up(n, 0.0), down(n, 0.0);
  for (int x = 1; x < n; ++x) std::tie(up[x], down[x]) = mm1_zero_variance_row(params, x);

  // ret[x] = probability of coming back down to x after stepping up to x+1;
  // stepping down is always followed by a certain climb back, so the
  // self-return probability at x is down(x) + up(x) * ret[x]
  std::vector<double> ret(n, 0.0);
  for (int x = n - 2; x >= 1; --x) ret[x] = down[x + 1] / (1.0 - up[x + 1] * ret[x + 1]);

  std::vector<double> visits(n + 1, 1.0);
  for (int x = 1; x < n; ++x) {
    const double self_return = down[x] + up[x] * ret[x];
    visits[x] = 1.0 / (1.0 - self_return);
  }
  return visits;
}

double mm1_kl_closed_form(const Mm1Params& params, const ChangeOfMeasure& candidate) {
  params.validate();
  if (static_cast<int>(candidate.rows.size()) != params.n + 1)
    throw SupportError("candidate measure has the wrong state count");

  // the conditioned first step is 0 -> 1 with probability one
  double d = kl_term(1.0, candidate.prob(0, 1));
  const std::vector<double> visits = mm1_zero_variance_visits(params);
  for (int x = 1; x < params.n; ++x) {
    const auto [up, down] = mm1_zero_variance_row(params, x);
    const double term = kl_term(up, candidate.prob(x, x + 1)) +
                        kl_term(down, candidate.prob(x, x - 1));
    d += visits[x] * term;
  }
  return d;
}

SweepResult run_sweep(const SweepConfig& config) {
  SweepResult result;
  const RngStream root = RngStream::root(config.seed);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (int n : config.grid) {
    SweepRow row;
    row.n = n;
    try {
      Mm1Params params{config.lambda, config.mu, n};
      const MarkovModel model = build_mm1(params);
      const RngStream cell = root.substream(static_cast<std::uint64_t>(n));

      CeConfig ce;
      ce.samples_per_iteration = std::max(config.k_floor, config.k_scale * n);
      ce.max_iterations = config.iterations;
      ce.convergence_norm = config.convergence_norm;
      ce.smoothing = config.smoothing;
      ce.limits = config.limits;
      const CeResult trained = ce_train(model, ce, cell.substream(1));

      EstimatorReport report = estimate(model, trained.measure, config.replications,
                                        cell.substream(2), config.threads, config.limits);
      report.seed = config.seed;
      const OptimalityDiagnostics diag = optimality_check(model, trained.measure, report);

      row.exact_pa = diag.exact_pa;
      row.mean = report.mean;
      row.re = report.cv;
      row.rat = report.rat;
      row.kl = diag.kl;
      row.kl_over_abs_log_pa = diag.kl_over_abs_log_pa;
      row.hits = report.hits;
      row.replications = report.replications;
    } catch (const std::exception& e) {
      row.error = e.what();
      row.exact_pa = row.mean = row.re = row.rat = nan;
      row.kl = row.kl_over_abs_log_pa = nan;
      row.hits = 0;
      row.replications = 0;
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

}  // namespace raresim
