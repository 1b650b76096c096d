#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hypofk::cli {

enum ExitCode : int {
    kOk = 0,             // success / all checks passed
    kCheckFailed = 1,    // a check ran and failed
    kConfigError = 2,    // bad flags, unreadable or invalid configuration
    kUnreliable = 3,     // numerical unreliability (step cap, divergence, too few samples)
};

/// Runs the command line `args` (without the program name). The JSON report
/// goes to `out`, diagnostics to `err`; the return value is the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hypofk::cli
