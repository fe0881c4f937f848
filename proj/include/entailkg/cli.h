#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace entailkg {

enum ExitCode : int { exit_ok = 0, exit_input = 2, exit_overwrite = 3, exit_internal = 4 };

// Runs the `entailkg` command line; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace entailkg
