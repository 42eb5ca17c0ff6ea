#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mr2::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,
    kDataError = 3,
    kWeakIdentification = 4,
};

/// Runs the command line `args` (program name excluded), writing results to
/// `out` and diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Splits a comma list and expands ranges such as "G1..G5".
std::vector<std::string> expand_columns(const std::string& spec);

}  // namespace mr2::cli
