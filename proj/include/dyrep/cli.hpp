#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dyrep {

enum ExitCode : int {
    exit_ok = 0,
    exit_failure = 1,
    exit_config = 2,
    exit_data = 3,
    exit_numeric = 4,
};

/// Entry point of the `dyrep` tool. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

} // namespace dyrep
