#include "raresim/chain_format.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <vector>

#include "raresim/errors.hpp"

namespace raresim {

namespace {

constexpr StateId kMaxStates = 1'000'000;

struct RawChain {
  StateId n_states = 0;
  std::vector<StateKind> kinds;
  std::vector<bool> declared;
  TransitionRows rows;
};

[[noreturn]] void fail(int line, const std::string& what) {
  throw ModelError("line " + std::to_string(line) + ": " + what);
}

long parse_int(const std::string& token, int line, const char* what) {
  long value = 0;
  auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || p != token.data() + token.size())
    fail(line, std::string("expected an integer for ") + what + ", got '" + token + "'");
  return value;
}

RawChain parse_raw(std::istream& in) {
  RawChain chain;
  bool have_states = false;
  std::string line;
  int line_no = 0;
  std::vector<std::set<StateId>> targets;

  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    std::string directive;
    if (!(tokens >> directive)) continue;

    if (directive == "states") {
      if (have_states) fail(line_no, "duplicate 'states' line");
      std::string count;
      if (!(tokens >> count)) fail(line_no, "'states' needs a count");
      long n = parse_int(count, line_no, "the state count");
      if (n < 1 || n > kMaxStates) fail(line_no, "state count out of range");
      chain.n_states = static_cast<StateId>(n);
      chain.kinds.assign(chain.n_states, StateKind::Internal);
      chain.declared.assign(chain.n_states, false);
      chain.rows.resize(chain.n_states);
      targets.resize(chain.n_states);
      have_states = true;
    } else if (directive == "state") {
      if (!have_states) fail(line_no, "'state' before 'states'");
      std::string id_token, kind_token;
      if (!(tokens >> id_token >> kind_token)) fail(line_no, "'state' needs <id> <G|F|T>");
      long id = parse_int(id_token, line_no, "the state id");
      if (id < 0 || id >= chain.n_states) fail(line_no, "state id out of range");
      if (chain.declared[id]) fail(line_no, "state " + id_token + " declared twice");
      chain.declared[id] = true;
      if (kind_token == "G")
        chain.kinds[id] = StateKind::Good;
      else if (kind_token == "F")
        chain.kinds[id] = StateKind::Bad;
      else if (kind_token == "T")
        chain.kinds[id] = StateKind::Internal;
      else
        fail(line_no, "unknown state kind '" + kind_token + "' (expected G, F, or T)");
    } else if (directive == "edge") {
      if (!have_states) fail(line_no, "'edge' before 'states'");
      std::string from_token, to_token, prob_token;
      if (!(tokens >> from_token >> to_token >> prob_token))
        fail(line_no, "'edge' needs <from> <to> <prob>");
      long from = parse_int(from_token, line_no, "the source state");
      long to = parse_int(to_token, line_no, "the target state");
      if (from < 0 || from >= chain.n_states || to < 0 || to >= chain.n_states)
        fail(line_no, "edge endpoint out of range");
      double prob = 0.0;
      auto [p, ec] =
          std::from_chars(prob_token.data(), prob_token.data() + prob_token.size(), prob);
      if (ec != std::errc() || p != prob_token.data() + prob_token.size())
        fail(line_no, "bad probability '" + prob_token + "'");
      if (!(prob >= 0.0) || prob > 1.0)
        fail(line_no, "probability " + prob_token + " outside [0, 1]");
      if (!targets[from].insert(static_cast<StateId>(to)).second)
        fail(line_no, "duplicate edge " + from_token + " -> " + to_token);
      chain.rows[from].push_back({static_cast<StateId>(to), prob});
    } else {
      fail(line_no, "unknown directive '" + directive + "'");
    }
    std::string extra;
    if (tokens >> extra) fail(line_no, "unexpected trailing token '" + extra + "'");
  }

  if (!have_states) throw ModelError("chain file has no 'states' line");
  for (StateId x = 0; x < chain.n_states; ++x)
    if (!chain.declared[x])
      throw ModelError("state " + std::to_string(x) + " has no 'state' line");
  for (auto& row : chain.rows)
    std::sort(row.begin(), row.end(), [](const Edge& a, const Edge& b) { return a.to < b.to; });
  return chain;
}

char kind_letter(StateKind kind) {
  switch (kind) {
    case StateKind::Good: return 'G';
    case StateKind::Bad: return 'F';
    default: return 'T';
  }
}

void write_states(std::ostream& out, const MarkovModel& model) {
  out << "states " << model.n_states << "\n";
  for (StateId x = 0; x < model.n_states; ++x)
    out << "state " << x << " " << kind_letter(model.kinds[x]) << "\n";
}

void write_edges(std::ostream& out, const TransitionRows& rows) {
  for (std::size_t x = 0; x < rows.size(); ++x)
    for (const Edge& e : rows[x])
      out << "edge " << x << " " << e.to << " " << format_number(e.prob) << "\n";
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

double parse_number(const std::string& token, const std::string& context) {
  double value = 0.0;
  auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || p != token.data() + token.size())
    throw ModelError("bad number '" + token + "' for " + context);
  return value;
}

MarkovModel parse_chain(std::istream& in) {
  RawChain raw = parse_raw(in);
  MarkovModel model{raw.n_states, std::move(raw.rows), std::move(raw.kinds)};
  require_valid(model);
  return model;
}

MarkovModel parse_chain_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open chain file '" + path + "'");
  try {
    return parse_chain(in);
  } catch (const ModelError& e) {
    throw ModelError(path + ": " + e.what());
  }
}

void write_chain(std::ostream& out, const MarkovModel& model) {
  write_states(out, model);
  write_edges(out, model.rows);
}

ChangeOfMeasure parse_measure_file(const std::string& path, const MarkovModel& model) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open measure file '" + path + "'");
  RawChain raw;
  try {
    raw = parse_raw(in);
  } catch (const ModelError& e) {
    throw ModelError(path + ": " + e.what());
  }
  if (raw.n_states != model.n_states)
    throw SupportError(path + ": measure has " + std::to_string(raw.n_states) +
                       " states, the model has " + std::to_string(model.n_states));
  for (StateId x = 0; x < model.n_states; ++x)
    if (raw.kinds[x] != model.kinds[x])
      throw SupportError(path + ": state " + std::to_string(x) +
                         " has a different kind than in the model");
  ChangeOfMeasure measure{std::move(raw.rows), {}};
  require_compatible(model, measure);
  return measure;
}

void write_measure(std::ostream& out, const MarkovModel& model,
                   const ChangeOfMeasure& measure) {
  write_states(out, model);
  write_edges(out, measure.rows);
}

}  // namespace raresim
