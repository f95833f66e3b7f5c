#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lhfglp::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,
    kNumerical = 3,
    kValidation = 4,
};

/// Runs one command line (args[0] is the program name) and returns its
/// exit code. Output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lhfglp::cli
