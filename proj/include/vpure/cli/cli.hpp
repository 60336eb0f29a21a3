#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace vpure::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitCheckpointMismatch = 4,
};

/// Runs one command line (without the program name). Errors are reported on
/// `err` and mapped to an exit code; nothing is thrown.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vpure::cli
