#pragma once

#include <string>
#include <vector>

namespace srood {

/// Runs one CLI invocation (argv without the program name) and returns the
/// process exit code.  All failures print a single "error: ..." line to
/// stderr and return nonzero.  Kept in the library so tests can drive the
/// full pipeline in-process.
int run_command(const std::vector<std::string>& args);

}  // namespace srood
