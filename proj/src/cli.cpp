#include "raresim/cli.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "raresim/chain_format.hpp"
#include "raresim/cross_entropy.hpp"
#include "raresim/errors.hpp"
#include "raresim/estimator.hpp"
#include "raresim/exact.hpp"
#include "raresim/mm1.hpp"

namespace fs = std::filesystem;

namespace raresim {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// sorted key=value pairs echoed into every output header, so a file states
// the settings that produced it; only settings that affect the numbers are
// included (never threads or paths under --out)
using ConfigEcho = std::map<std::string, std::string>;

struct ModelSpec {
  std::string mm1;    // "lambda,mu,n"
  std::string chain;  // path to a chain file
};

struct Mm1Spec {
  Mm1Params params;
  bool present = false;
};

Mm1Params parse_mm1_spec(const std::string& spec) {
  std::vector<std::string> parts;
  std::string token;
  std::istringstream in(spec);
  while (std::getline(in, token, ',')) parts.push_back(token);
  if (parts.size() != 3)
    throw ModelError("--mm1 expects lambda,mu,n (e.g. 0.8,1,10), got '" + spec + "'");
  Mm1Params params;
  params.lambda = parse_number(parts[0], "--mm1 lambda");
  params.mu = parse_number(parts[1], "--mm1 mu");
  const double level = parse_number(parts[2], "--mm1 n");
  params.n = static_cast<int>(level);
  if (static_cast<double>(params.n) != level)
    throw ModelError("--mm1 n must be an integer");
  params.validate();
  return params;
}

MarkovModel load_model(const ModelSpec& spec, Mm1Spec& mm1) {
  if (spec.mm1.empty() == spec.chain.empty())
    throw ModelError("give exactly one of --mm1 and --chain");
  if (!spec.mm1.empty()) {
    mm1.params = parse_mm1_spec(spec.mm1);
    mm1.present = true;
    return build_mm1(mm1.params);
  }
  return parse_chain_file(spec.chain);
}

void echo_model(ConfigEcho& echo, const ModelSpec& spec, const Mm1Spec& mm1) {
  if (mm1.present)
    echo["mm1"] = format_number(mm1.params.lambda) + "," + format_number(mm1.params.mu) +
                  "," + std::to_string(mm1.params.n);
  else
    echo["chain"] = spec.chain;
}

FirstStep parse_first_step(const std::string& s) {
  if (s == "conditioned") return FirstStep::Conditioned;
  if (s == "nominal") return FirstStep::Nominal;
  throw ModelError("--first-step must be 'conditioned' or 'nominal', got '" + s + "'");
}

std::ofstream open_out(const fs::path& dir, const std::string& name) {
  std::ofstream out(dir / name);
  if (!out) throw ModelError("cannot write " + (dir / name).string());
  return out;
}

void write_header(std::ostream& out, const std::string& command, const ConfigEcho& echo) {
  out << "# raresim " << kToolVersion << "\n";
  out << "# command: " << command << "\n";
  out << "# config:";
  for (const auto& [key, value] : echo) out << ' ' << key << '=' << value;
  out << "\n";
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

void write_measure_rows(std::ostream& out, const MarkovModel& model,
                        const ChangeOfMeasure& measure) {
  out << "from,to,prob\n";
  for (StateId x = 0; x < model.n_states; ++x)
    for (const Edge& e : measure.rows[x])
      out << x << ',' << e.to << ',' << format_number(e.prob) << '\n';
}

// ---- exact ----

struct ExactArgs {
  ModelSpec model;
  std::string first_step = "conditioned";
  std::string out = ".";
};

void run_exact_command(const ExactArgs& args) {
  Mm1Spec mm1;
  const MarkovModel model = load_model(args.model, mm1);
  const FirstStep first_step = parse_first_step(args.first_step);
  const ExactReport report = exact_report(model, first_step);

  ConfigEcho echo;
  echo_model(echo, args.model, mm1);
  echo["first-step"] = args.first_step;

  const fs::path dir(args.out);
  fs::create_directories(dir);

  {
    auto out = open_out(dir, "gamma.csv");
    write_header(out, "exact", echo);
    out << "state,gamma\n";
    for (StateId x = 0; x < model.n_states; ++x)
      out << x << ',' << format_number(report.hp.value[x]) << '\n';
  }
  {
    auto out = open_out(dir, "visits.csv");
    write_header(out, "exact", echo);
    out << "state,v,u\n";
    for (StateId x = 0; x < model.n_states; ++x)
      out << x << ',' << format_number(report.visits.v[x]) << ','
          << format_number(report.visits.u[x]) << '\n';
  }
  {
    auto out = open_out(dir, "p_opt.csv");
    write_header(out, "exact", echo);
    write_measure_rows(out, model, report.zero_variance);
  }
  {
    auto out = open_out(dir, "p_ce.csv");
    write_header(out, "exact", echo);
    write_measure_rows(out, model, report.cross_entropy);
  }
  {
    auto out = open_out(dir, "p_opt.chain");
    write_header(out, "exact", echo);
    write_measure(out, model, report.zero_variance);
  }
  {
    auto out = open_out(dir, "diagnostics.csv");
    write_header(out, "exact", echo);
    out << "key,value\n";
    out << "hit_probability," << format_number(report.hp.from_start) << '\n';
    for (const auto& [name, kl] : report.kl_to)
      out << "kl_zero_variance_to_" << name << ',' << format_number(kl) << '\n';
    out << "second_moment_nominal," << format_number(report.second_moment_nominal) << '\n';
    out << "second_moment_zero_variance,"
        << format_number(report.second_moment_zero_variance) << '\n';
    const double log_pa = std::log(report.hp.from_start);
    out << "rat_nominal," << format_number(std::log(report.second_moment_nominal) / log_pa)
        << '\n';
    out << "rat_zero_variance,"
        << format_number(std::log(report.second_moment_zero_variance) / log_pa) << '\n';
    out << "max_measure_diff," << format_number(report.max_measure_diff) << '\n';
  }

  std::cout << "hit probability " << format_number(report.hp.from_start)
            << "; wrote gamma.csv, visits.csv, p_opt.csv, p_ce.csv, p_opt.chain, "
               "diagnostics.csv to "
            << dir.string() << "\n";
}

// ---- train ----

struct TrainArgs {
  ModelSpec model;
  int samples = 0;  // 0 = auto
  int iterations = 10;
  double convergence = 1e-3;
  double smoothing = 1.0;
  std::string initial = "uniform";
  std::uint64_t seed = 0;
  std::int64_t max_steps = SamplerLimits{}.max_steps;
  std::string out = ".";
};

int resolve_samples(int requested, const Mm1Spec& mm1) {
  if (requested > 0) return requested;
  if (mm1.present) return std::max(2000, 200 * mm1.params.n);
  return 2000;
}

void run_train_command(const TrainArgs& args) {
  Mm1Spec mm1;
  const MarkovModel model = load_model(args.model, mm1);

  CeConfig config;
  config.samples_per_iteration = resolve_samples(args.samples, mm1);
  config.max_iterations = args.iterations;
  config.convergence_norm = args.convergence;
  config.smoothing = args.smoothing;
  config.limits.max_steps = args.max_steps;
  if (args.initial == "uniform") {
    config.initial = InitialMeasure::UniformNeighbor;
  } else if (args.initial == "nominal") {
    config.initial = InitialMeasure::Nominal;
  } else {
    config.initial = InitialMeasure::UserSupplied;
    config.user_initial = parse_measure_file(args.initial, model);
  }

  const CeResult result = ce_train(model, config, RngStream::root(args.seed));

  ConfigEcho echo;
  echo_model(echo, args.model, mm1);
  echo["samples"] = std::to_string(config.samples_per_iteration);
  echo["iterations"] = std::to_string(args.iterations);
  echo["convergence"] = format_number(args.convergence);
  echo["smoothing"] = format_number(args.smoothing);
  echo["initial"] = args.initial;
  echo["seed"] = std::to_string(args.seed);
  echo["max-steps"] = std::to_string(args.max_steps);

  const fs::path dir(args.out);
  fs::create_directories(dir);
  {
    auto out = open_out(dir, "trace.csv");
    write_header(out, "train", echo);
    out << "iteration,hits,ess,matrix_diff_norm,carried_rows\n";
    for (const CeIteration& it : result.trace.iterations)
      out << it.iteration << ',' << it.hits << ',' << format_number(it.ess) << ','
          << format_number(it.matrix_diff_norm) << ',' << it.carried_rows.size() << '\n';
  }
  {
    auto out = open_out(dir, "measure.chain");
    write_header(out, "train", echo);
    write_measure(out, model, result.measure);
  }

  const CeIteration& last = result.trace.iterations.back();
  std::cout << "trained in " << result.trace.iterations.size() << " iteration(s); last "
            << "hits " << last.hits << ", ess " << format_number(last.ess)
            << ", measure change " << format_number(last.matrix_diff_norm)
            << "; wrote trace.csv, measure.chain to " << dir.string() << "\n";
}

// ---- estimate ----

struct EstimateArgs {
  ModelSpec model;
  std::string measure = "nominal";
  std::int64_t replications = 1000;
  int threads = 1;
  std::string first_step = "conditioned";
  std::uint64_t seed = 0;
  std::int64_t max_steps = SamplerLimits{}.max_steps;
  std::string out = ".";
};

ChangeOfMeasure resolve_measure(const std::string& name, const MarkovModel& model,
                                FirstStep first_step) {
  if (name == "nominal") return nominal_measure(model);
  if (name == "opt")
    return zero_variance_measure(model, hitting_probabilities(model), first_step);
  return parse_measure_file(name, model);
}

void run_estimate_command(const EstimateArgs& args) {
  Mm1Spec mm1;
  const MarkovModel model = load_model(args.model, mm1);
  const FirstStep first_step = parse_first_step(args.first_step);
  const ChangeOfMeasure measure = resolve_measure(args.measure, model, first_step);

  SamplerLimits limits;
  limits.max_steps = args.max_steps;
  EstimatorReport report = estimate(model, measure, args.replications,
                                    RngStream::root(args.seed), args.threads, limits);
  report.seed = args.seed;

  double kl = kNan, klr = kNan;
  try {
    const OptimalityDiagnostics diag = optimality_check(model, measure, report);
    kl = diag.kl;
    klr = diag.kl_over_abs_log_pa;
  } catch (const std::exception&) {
    // exact diagnostics are best-effort here; the estimate itself stands
  }

  ConfigEcho echo;
  echo_model(echo, args.model, mm1);
  echo["measure"] = args.measure;
  echo["first-step"] = args.first_step;
  echo["replications"] = std::to_string(args.replications);
  echo["seed"] = std::to_string(args.seed);
  echo["max-steps"] = std::to_string(args.max_steps);

  const fs::path dir(args.out);
  fs::create_directories(dir);
  {
    auto out = open_out(dir, "estimate.csv");
    write_header(out, "estimate", echo);
    out << "states,seed,replications,hits,mean,variance,re,ci95,rat,kl,"
           "kl_over_abs_log_pa\n";
    out << model.n_states << ',' << report.seed << ',' << report.replications << ','
        << report.hits << ',' << format_number(report.mean) << ','
        << format_number(report.variance) << ',' << format_number(report.relative_error)
        << ',' << format_number(report.ci95_halfwidth) << ',' << format_number(report.rat)
        << ',' << format_number(kl) << ',' << format_number(klr) << '\n';
  }

  std::cout << "mean " << format_number(report.mean) << " +/- "
            << format_number(report.ci95_halfwidth) << " (95%), hits " << report.hits
            << "/" << report.replications;
  if (!report.ci_reliable) std::cout << " [interval unreliable: fewer than 30 hits]";
  std::cout << "; wrote estimate.csv to " << dir.string() << "\n";
}

// ---- sweep ----

struct SweepArgs {
  double lambda = 0.8;
  double mu = 1.0;
  std::vector<int> grid = {10, 25, 50, 100};
  std::int64_t replications = 1000;
  int iterations = 10;
  int k_scale = 200;
  int k_floor = 2000;
  int threads = 1;
  double convergence = 1e-3;
  double smoothing = 1.0;
  std::uint64_t seed = 0;
  std::int64_t max_steps = SamplerLimits{}.max_steps;
  std::string out = ".";
};

void run_sweep_command(const SweepArgs& args) {
  SweepConfig config;
  config.lambda = args.lambda;
  config.mu = args.mu;
  config.grid = args.grid;
  config.replications = args.replications;
  config.iterations = args.iterations;
  config.k_scale = args.k_scale;
  config.k_floor = args.k_floor;
  config.threads = args.threads;
  config.convergence_norm = args.convergence;
  config.smoothing = args.smoothing;
  config.seed = args.seed;
  config.limits.max_steps = args.max_steps;

  const SweepResult result = run_sweep(config);

  ConfigEcho echo;
  echo["lambda"] = format_number(args.lambda);
  echo["mu"] = format_number(args.mu);
  std::string grid;
  for (std::size_t i = 0; i < args.grid.size(); ++i)
    grid += (i ? "," : "") + std::to_string(args.grid[i]);
  echo["grid"] = grid;
  echo["replications"] = std::to_string(args.replications);
  echo["iterations"] = std::to_string(args.iterations);
  echo["k-scale"] = std::to_string(args.k_scale);
  echo["k-floor"] = std::to_string(args.k_floor);
  echo["convergence"] = format_number(args.convergence);
  echo["smoothing"] = format_number(args.smoothing);
  echo["seed"] = std::to_string(args.seed);
  echo["max-steps"] = std::to_string(args.max_steps);

  const fs::path dir(args.out);
  fs::create_directories(dir);
  {
    auto out = open_out(dir, "sweep.csv");
    write_header(out, "sweep", echo);
    out << "n,exact_pa,mean,re,rat,kl,kl_over_abs_log_pa,hits,replications,error\n";
    for (const SweepRow& row : result.rows)
      out << row.n << ',' << format_number(row.exact_pa) << ',' << format_number(row.mean)
          << ',' << format_number(row.re) << ',' << format_number(row.rat) << ','
          << format_number(row.kl) << ',' << format_number(row.kl_over_abs_log_pa) << ','
          << row.hits << ',' << row.replications << ',' << csv_field(row.error) << '\n';
  }

  for (const SweepRow& row : result.rows) {
    std::cout << "n=" << row.n;
    if (row.error.empty())
      std::cout << " pa=" << format_number(row.exact_pa)
                << " mean=" << format_number(row.mean) << " re=" << format_number(row.re)
                << " rat=" << format_number(row.rat) << " kl=" << format_number(row.kl)
                << " kl/|log pa|=" << format_number(row.kl_over_abs_log_pa);
    else
      std::cout << " failed: " << row.error;
    std::cout << "\n";
  }
  std::cout << "wrote sweep.csv to " << dir.string() << "\n";
}

void add_model_flags(CLI::App* sub, ModelSpec& spec) {
  auto* mm1 = sub->add_option("--mm1", spec.mm1,
                              "birth-death overflow model as lambda,mu,n (e.g. 0.8,1,10)");
  sub->add_option("--chain", spec.chain, "chain file to load")->excludes(mm1);
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"rare-event toolkit for finite absorbing chains: exact zero-variance "
               "solves, cross-entropy training, importance-sampling estimation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("raresim ") + kToolVersion);
  // one config option for the whole tool; keys live in [subcommand] sections.
  // fallthrough lets it be written after the subcommand name
  app.fallthrough();
  app.set_config("--config", "",
                 "INI file with defaults, keyed by [subcommand] sections; "
                 "explicit flags win");

  ExactArgs exact_args;
  auto* exact_cmd =
      app.add_subcommand("exact", "solve hitting probabilities, derived measures, and "
                                  "efficiency diagnostics");
  add_model_flags(exact_cmd, exact_args.model);
  exact_cmd->add_option("--first-step", exact_args.first_step,
                        "good-state row of derived measures: conditioned|nominal");
  exact_cmd->add_option("--out", exact_args.out, "output directory");
  exact_cmd->callback([&] { run_exact_command(exact_args); });

  TrainArgs train_args;
  auto* train_cmd =
      app.add_subcommand("train", "iterate the cross-entropy update to a sampling measure");
  add_model_flags(train_cmd, train_args.model);
  train_cmd->add_option("--samples", train_args.samples,
                        "paths per iteration (default: 200n for --mm1, floor 2000)");
  train_cmd->add_option("--iterations", train_args.iterations, "iteration cap");
  train_cmd->add_option("--convergence", train_args.convergence,
                        "stop when the measure changes less than this (max norm)");
  train_cmd->add_option("--smoothing", train_args.smoothing,
                        "blend weight toward the fresh update, in (0,1]");
  train_cmd->add_option("--initial", train_args.initial,
                        "starting measure: uniform|nominal|<measure file>");
  train_cmd->add_option("--seed", train_args.seed, "random seed");
  train_cmd->add_option("--max-steps", train_args.max_steps, "per-path step cap");
  train_cmd->add_option("--out", train_args.out, "output directory");
  train_cmd->callback([&] { run_train_command(train_args); });

  EstimateArgs estimate_args;
  auto* estimate_cmd =
      app.add_subcommand("estimate", "importance-sampling estimate under a measure");
  add_model_flags(estimate_cmd, estimate_args.model);
  estimate_cmd->add_option("--measure", estimate_args.measure,
                           "sampling measure: nominal|opt|<measure file>");
  estimate_cmd->add_option("--replications", estimate_args.replications,
                           "independent paths");
  estimate_cmd->add_option("--threads", estimate_args.threads,
                           "worker threads (never changes the numbers)");
  estimate_cmd->add_option("--first-step", estimate_args.first_step,
                           "good-state row when --measure opt: conditioned|nominal");
  estimate_cmd->add_option("--seed", estimate_args.seed, "random seed");
  estimate_cmd->add_option("--max-steps", estimate_args.max_steps, "per-path step cap");
  estimate_cmd->add_option("--out", estimate_args.out, "output directory");
  estimate_cmd->callback([&] { run_estimate_command(estimate_args); });

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand(
      "sweep", "train + estimate the overflow model across levels, with exact diagnostics");
  sweep_cmd->add_option("--lambda", sweep_args.lambda, "arrival rate");
  sweep_cmd->add_option("--mu", sweep_args.mu, "service rate");
  sweep_cmd->add_option("--grid", sweep_args.grid, "overflow levels")->delimiter(',');
  sweep_cmd->add_option("--replications", sweep_args.replications,
                        "independent paths per level");
  sweep_cmd->add_option("--iterations", sweep_args.iterations, "training iteration cap");
  sweep_cmd->add_option("--k-scale", sweep_args.k_scale,
                        "training paths per iteration: max(k-floor, k-scale * n)");
  sweep_cmd->add_option("--k-floor", sweep_args.k_floor, "training path floor");
  sweep_cmd->add_option("--threads", sweep_args.threads,
                        "worker threads (never changes the numbers)");
  sweep_cmd->add_option("--convergence", sweep_args.convergence,
                        "training convergence threshold (max norm)");
  sweep_cmd->add_option("--smoothing", sweep_args.smoothing,
                        "training blend weight, in (0,1]");
  sweep_cmd->add_option("--seed", sweep_args.seed, "random seed");
  sweep_cmd->add_option("--max-steps", sweep_args.max_steps, "per-path step cap");
  sweep_cmd->add_option("--out", sweep_args.out, "output directory");
  sweep_cmd->callback([&] { run_sweep_command(sweep_args); });

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("raresim");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  } catch (const CeDegeneracy& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const SupportError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSupport;
  } catch (const SolverError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const SamplingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const ModelError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}

}  // namespace raresim
