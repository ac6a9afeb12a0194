#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qsspf::cli {

/// Runs the `qsspf` command line. `args` excludes the program name.
/// Returns the process exit status: 0 on success or convergence, 1 when a
/// solve did not converge, 2 for usage and input errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qsspf::cli
