#pragma once

#include <iosfwd>
#include <string>

#include "raresim/markov.hpp"

namespace raresim {

// Shortest decimal representation that round-trips to the same double,
// locale-independent. Used for every number we write.
std::string format_number(double v);

// Strict, locale-independent double parse of a whole token.
double parse_number(const std::string& token, const std::string& context);

// Chain text format:
//   # comment (anywhere)
//   states N
//   state <id> <G|F|T>        one line per state: good, bad, internal
//   edge <from> <to> <prob>   probabilities as decimal literals
// Parsing is bit-exact: the values written by write_chain read back as the
// same doubles.
MarkovModel parse_chain(std::istream& in);
MarkovModel parse_chain_file(const std::string& path);

void write_chain(std::ostream& out, const MarkovModel& model);

// A measure is stored in the same format; the state lines must match the
// model it will be used with. Throws SupportError on shape mismatch and on
// missing support.
ChangeOfMeasure parse_measure_file(const std::string& path, const MarkovModel& model);

void write_measure(std::ostream& out, const MarkovModel& model,
                   const ChangeOfMeasure& measure);

}  // namespace raresim
