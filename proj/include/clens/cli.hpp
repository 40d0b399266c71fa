#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace clens {

/// Parses `args` (without the program name) and runs one subcommand.
/// Returns 0 on success, 2 for validation failures, 3 for I/O or format
/// errors and 4 for configuration or usage errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace clens
