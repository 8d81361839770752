#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vbmerge::cli {

enum ExitCode : int {
  kSuccess = 0,
  kInternalError = 1,
  kUsage = 2,
  kNumericalFailure = 3,
  kNotConverged = 4,
  kBoundViolation = 5,
};

/// Runs one `vbmerge` invocation. `args` excludes the program name; the
/// first element is the subcommand (synth, fit, eval or oracle-check).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vbmerge::cli
