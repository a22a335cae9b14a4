#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "raresim/chain_format.hpp"
#include "raresim/cli.hpp"
#include "raresim/mm1.hpp"
#include "support/test_support.hpp"

using namespace raresim;
using testsup::close;
namespace fs = std::filesystem;

namespace {

// fresh scratch directory per call; wiped up front so reruns start clean
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("raresim-cli-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// data lines of a CSV: everything after the comment header and column row
std::vector<std::string> data_lines(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::vector<std::string> out;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;  // column names
      continue;
    }
    out.push_back(line);
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  REQUIRE(out);
  out << text;
}

}  // namespace

TEST_CASE("exact command writes solveable, parseable outputs") {
  const fs::path dir = scratch("exact");
  const int code = run_cli({"exact", "--mm1", "0.8,1,10", "--out", dir.string()});
  REQUIRE(code == kExitOk);

  // gamma.csv carries the closed-form hitting probabilities
  const auto gamma = data_lines(dir / "gamma.csv");
  REQUIRE(gamma.size() == 11);
  const Mm1Params params{0.8, 1.0, 10};
  for (const std::string& line : gamma) {
    const auto fields = split_csv(line);
    REQUIRE(fields.size() == 2);
    const int x = std::stoi(fields[0]);
    const double value = parse_number(fields[1], "gamma");
    CHECK(close(value, mm1_hit_probability(params, x), 1e-12, 1e-300));
  }

  // diagnostics carry the headline probability and the measure identity
  bool saw_pa = false, saw_diff = false;
  for (const std::string& line : data_lines(dir / "diagnostics.csv")) {
    const auto fields = split_csv(line);
    REQUIRE(fields.size() == 2);
    if (fields[0] == "hit_probability") {
      CHECK(close(parse_number(fields[1], "pa"), mm1_hit_probability(params, 1),
                  1e-12, 0.0));
      saw_pa = true;
    }
    if (fields[0] == "max_measure_diff") {
      CHECK(parse_number(fields[1], "diff") <= 1e-12);
      saw_diff = true;
    }
  }
  CHECK(saw_pa);
  CHECK(saw_diff);

  // every output starts with the same self-describing header
  for (const char* name :
       {"gamma.csv", "visits.csv", "p_opt.csv", "p_ce.csv", "p_opt.chain",
        "diagnostics.csv"}) {
    const std::string text = slurp(dir / name);
    CHECK(text.rfind("# raresim ", 0) == 0);
    CHECK(text.find("# command: exact") != std::string::npos);
    CHECK(text.find("mm1=0.8,1,10") != std::string::npos);
  }
}

TEST_CASE("the written optimal measure round-trips bit-exactly") {
  const fs::path dir = scratch("roundtrip");
  REQUIRE(run_cli({"exact", "--mm1", "0.8,1,10", "--out", dir.string()}) == kExitOk);

  // estimating under the re-parsed file must show the zero-variance signature;
  // any rounding in the write/parse cycle would destroy it
  const fs::path chain = dir / "p_opt.chain";
  const int code = run_cli({"estimate", "--mm1", "0.8,1,10", "--measure", chain.string(),
                            "--replications", "500", "--out", dir.string()});
  REQUIRE(code == kExitOk);

  const auto rows = data_lines(dir / "estimate.csv");
  REQUIRE(rows.size() == 1);
  const auto fields = split_csv(rows[0]);
  // states,seed,replications,hits,mean,variance,re,ci95,rat,kl,klr
  REQUIRE(fields.size() == 11);
  CHECK(fields[0] == "11");
  CHECK(fields[2] == "500");
  CHECK(fields[3] == "500");  // conditioned measure: every path hits
  const double mean = parse_number(fields[4], "mean");
  const double re = parse_number(fields[6], "re");
  const double rat = parse_number(fields[8], "rat");
  const double kl = parse_number(fields[9], "kl");
  CHECK(close(mean, mm1_hit_probability({0.8, 1.0, 10}, 1), 1e-10, 0.0));
  CHECK(re <= 1e-12);
  CHECK(std::abs(rat - 2.0) <= 1e-10);
  CHECK(kl <= 1e-12);
}

TEST_CASE("train writes a trace and a loadable measure") {
  const fs::path dir = scratch("train");
  const int code = run_cli({"train", "--mm1", "0.8,1,5", "--samples", "2000",
                            "--iterations", "5", "--seed", "4", "--out", dir.string()});
  REQUIRE(code == kExitOk);

  const auto trace = data_lines(dir / "trace.csv");
  REQUIRE(!trace.empty());
  REQUIRE(trace.size() <= 5);
  for (const std::string& line : trace) {
    const auto fields = split_csv(line);
    REQUIRE(fields.size() == 5);
    CHECK(std::stoi(fields[1]) > 0);  // hits every iteration
  }

  // the trained measure feeds straight back into estimation
  const fs::path measure = dir / "measure.chain";
  REQUIRE(run_cli({"estimate", "--mm1", "0.8,1,5", "--measure", measure.string(),
                   "--replications", "4000", "--seed", "9", "--out",
                   dir.string()}) == kExitOk);
  const auto rows = data_lines(dir / "estimate.csv");
  REQUIRE(rows.size() == 1);
  const auto fields = split_csv(rows[0]);
  const double mean = parse_number(fields[4], "mean");
  const double ci95 = parse_number(fields[7], "ci95");
  const double pa = mm1_hit_probability({0.8, 1.0, 5}, 1);
  CHECK(std::abs(mean - pa) < 3.0 * ci95);  // trained, so the interval is tight
}

TEST_CASE("identical invocations write identical bytes") {
  const fs::path a = scratch("repro-a");
  const fs::path b = scratch("repro-b");
  const std::vector<std::string> base = {"estimate", "--mm1", "0.8,1,10",
                                         "--measure", "opt", "--replications", "2000",
                                         "--seed", "31"};
  auto with_out = [&](const fs::path& dir, const std::string& threads) {
    std::vector<std::string> args = base;
    args.insert(args.end(), {"--threads", threads, "--out", dir.string()});
    return args;
  };
  REQUIRE(run_cli(with_out(a, "1")) == kExitOk);
  REQUIRE(run_cli(with_out(b, "4")) == kExitOk);
  // thread count changes neither the numbers nor a byte of the file
  CHECK(slurp(a / "estimate.csv") == slurp(b / "estimate.csv"));

  const fs::path c = scratch("repro-c");
  REQUIRE(run_cli(with_out(c, "1")) == kExitOk);
  CHECK(slurp(a / "estimate.csv") == slurp(c / "estimate.csv"));
}

TEST_CASE("a config file supplies defaults; flags win") {
  const fs::path dir = scratch("config");
  write_file(dir / "run.ini",
             "[estimate]\n"
             "replications=750\n"
             "seed=12\n");
  REQUIRE(run_cli({"estimate", "--mm1", "0.8,1,5", "--config",
                   (dir / "run.ini").string(), "--seed", "99", "--out",
                   dir.string()}) == kExitOk);
  const auto rows = data_lines(dir / "estimate.csv");
  REQUIRE(rows.size() == 1);
  const auto fields = split_csv(rows[0]);
  CHECK(fields[1] == "99");   // flag beats the config file
  CHECK(fields[2] == "750");  // config fills what flags left unset
}

TEST_CASE("input mistakes exit with the input code") {
  CHECK(run_cli({"estimate"}) == kExitInput);  // no model given
  CHECK(run_cli({"estimate", "--mm1", "0.8,1,5", "--chain", "x.chain"}) == kExitInput);
  CHECK(run_cli({"estimate", "--mm1", "0.8,1"}) == kExitInput);       // malformed triple
  CHECK(run_cli({"estimate", "--mm1", "1.5,1.0,5"}) == kExitInput);   // lambda >= mu
  CHECK(run_cli({"estimate", "--mm1", "0.8,1,5", "--bogus"}) == kExitInput);
  CHECK(run_cli({"nonsense"}) == kExitInput);
  CHECK(run_cli({}) == kExitInput);  // a subcommand is required
  CHECK(run_cli({"estimate", "--chain", "/nonexistent/x.chain"}) == kExitInput);
  CHECK(run_cli({"exact", "--mm1", "0.8,1,10", "--first-step", "sideways"}) == kExitInput);
}

TEST_CASE("help and version exit cleanly") {
  CHECK(run_cli({"--version"}) == kExitOk);
  CHECK(run_cli({"--help"}) == kExitOk);
  CHECK(run_cli({"estimate", "--help"}) == kExitOk);
}

TEST_CASE("degenerate training exits with the degeneracy code") {
  const fs::path dir = scratch("degenerate");
  // one nominal path per iteration cannot hit a ~1e-11 event
  CHECK(run_cli({"train", "--mm1", "0.8,1,100", "--samples", "1", "--initial", "nominal",
                 "--iterations", "2", "--out", dir.string()}) == kExitDegenerate);
}

TEST_CASE("a measure file that starves a required edge exits with the support code") {
  const fs::path dir = scratch("support");
  // 0 -> 1 -> {0 or 2}, 2 bad; the measure drops the only route to 2
  write_file(dir / "model.chain",
             "states 3\n"
             "state 0 G\nstate 1 T\nstate 2 F\n"
             "edge 0 1 1\n"
             "edge 1 0 0.5\nedge 1 2 0.5\n"
             "edge 2 2 1\n");
  write_file(dir / "starved.chain",
             "states 3\n"
             "state 0 G\nstate 1 T\nstate 2 F\n"
             "edge 0 1 1\n"
             "edge 1 0 1\n"
             "edge 2 2 1\n");
  CHECK(run_cli({"estimate", "--chain", (dir / "model.chain").string(), "--measure",
                 (dir / "starved.chain").string(), "--out", dir.string()}) == kExitSupport);
}

TEST_CASE("an impossible event exits with the solver code") {
  const fs::path dir = scratch("solver");
  // the bad state exists but nothing ever reaches it
  write_file(dir / "island.chain",
             "states 3\n"
             "state 0 G\nstate 1 T\nstate 2 F\n"
             "edge 0 1 1\n"
             "edge 1 0 1\n"
             "edge 2 2 1\n");
  CHECK(run_cli({"estimate", "--chain", (dir / "island.chain").string(), "--measure",
                 "opt", "--out", dir.string()}) == kExitSolver);
}

TEST_CASE("sweep writes one row per level") {
  const fs::path dir = scratch("sweep");
  REQUIRE(run_cli({"sweep", "--grid", "5,10", "--k-floor", "500", "--k-scale", "50",
                   "--replications", "200", "--iterations", "5", "--out",
                   dir.string()}) == kExitOk);
  const auto rows = data_lines(dir / "sweep.csv");
  REQUIRE(rows.size() == 2);
  const auto first = split_csv(rows[0]);
  CHECK(first[0] == "5");
  CHECK(close(parse_number(first[1], "pa"), mm1_hit_probability({0.8, 1.0, 5}, 1),
              1e-12, 0.0));
  const auto second = split_csv(rows[1]);
  CHECK(second[0] == "10");
}
