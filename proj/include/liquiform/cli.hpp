#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace liquiform {

enum ExitCode : int {
  kExitOk = 0,
  kExitIo = 1,
  kExitUsage = 2,
  kExitNumerical = 3,
  kExitSelfcheck = 4,
};

// The liquiform command line. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace liquiform
