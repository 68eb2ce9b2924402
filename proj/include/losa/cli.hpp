#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace losa {

// Parse argv-style arguments, run the requested subcommand, and return the
// process exit code: 0 success, 2 config error, 3 numeric failure, 4 I/O
// error. Diagnostics go to err; command output goes to out.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace losa
