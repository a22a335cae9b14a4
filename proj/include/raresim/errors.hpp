#pragma once

#include <stdexcept>

namespace raresim {

// Invalid input: malformed files, models that fail validation, bad parameters.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure inside the exact solvers (singular system, bad residual,
// a row that cannot be normalized).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Path sampling failure: a visited state with no outgoing mass, or the
// step cap was exceeded.
class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A sampling measure that does not match the model: wrong shape, or missing
// support on an edge the model needs to reach the bad set.
class SupportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace raresim
