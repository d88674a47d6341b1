#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace reflcausal::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kValidation = 1;
inline constexpr int kRuntime = 2;

/// Runs one command line (args[0] is the program name). Tables and
/// summaries go to `out`, diagnostics and usage text to `err`.
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace reflcausal::cli
