#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nhk::cli {

/// Exit codes of the nhk command.
enum ExitCode : int {
  kPass = 0,
  kFail = 1,
  kConfigError = 2,
  kSingularity = 3,
  kIncompatible = 4,
  kIntegrationSingularity = 5,
};

inline constexpr const char* kSchema = "nhk.report/1";

/// Runs the command line `args` (without the program name), writing reports to
/// `out` and diagnostics to `err`. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nhk::cli
