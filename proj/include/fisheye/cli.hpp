#pragma once

#include <string>
#include <vector>

namespace fisheye::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kInputError = 2,
  kValidationError = 3,
  kNotConverged = 4,
};

/// Entry point of the fisheye_cli tool. Returns the process exit code.
int run(int argc, const char* const* argv);

/// Convenience overload; args excludes the program name.
int run(const std::vector<std::string>& args);

}  // namespace fisheye::cli
