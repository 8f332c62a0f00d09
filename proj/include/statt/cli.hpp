#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace statt {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitNumerical = 4,
};

/// Entry point of the `statt` tool. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Library version recorded in run manifests.
const char* library_version();

}  // namespace statt
