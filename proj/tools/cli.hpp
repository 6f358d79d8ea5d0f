#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace oaslam {

/// Runs one command line (without the program name). Returns the process
/// exit code: 0 success, 1 input or configuration error, 2 solver failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace oaslam
