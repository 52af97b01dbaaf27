#pragma once

#include <string>
#include <vector>

namespace thd {

// Dispatches one CLI invocation (argv without the program name). Returns the
// process exit status: 0 success, 1 validation error, 2 transport failure.
int run_subcommand(const std::vector<std::string>& args);

}  // namespace thd
