#include <string>
#include <vector>

#include "raresim/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return raresim::run_cli(args);
}
