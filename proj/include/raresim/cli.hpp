#pragma once

#include <string>
#include <vector>

namespace raresim {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;       // bad flags, malformed files, invalid models
inline constexpr int kExitSolver = 2;      // numerical failure, sampling failure
inline constexpr int kExitDegenerate = 3;  // cross-entropy training collapsed
inline constexpr int kExitSupport = 4;     // measure/model support mismatch

// Full command-line entry point (argv[0] excluded); writes files under the
// --out directory and diagnostics to the given streams. Linked into the
// binary and into the tests, so command behavior is testable in-process.
int run_cli(const std::vector<std::string>& args);

}  // namespace raresim
