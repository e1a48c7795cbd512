#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tmkt {

/// Runs one subcommand. args excludes the program name. JSON results go to
/// out, human-readable logs to err. Returns the process exit code: 0 on
/// success, 2 for usage errors, otherwise the error category's code.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tmkt
