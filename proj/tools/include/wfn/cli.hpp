#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wfn {

/// Runs the `wfn` command line. args excludes the program name. Returns the
/// process exit code: 0 on success, 1 on a failed command, 2 on bad usage.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wfn
