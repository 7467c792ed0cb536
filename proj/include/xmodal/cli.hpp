#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace xmodal {

// Process exit statuses of the command-line tool.
enum ExitCode : int {
    exit_ok = 0,
    exit_usage = 1,
    exit_io = 2,
    exit_numeric = 3,
    exit_selfcheck = 4,
};

// Runs one command. args excludes the program name, e.g.
// {"train", "--data", "d.feat", "--out", "m.ubvl"}.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace xmodal
