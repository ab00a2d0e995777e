#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dpnc {

/// Runs the dpnc command line. args excludes the program name.
/// Returns 0 on success, 1 on runtime failure, 2 on configuration or usage errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dpnc
