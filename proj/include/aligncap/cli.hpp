#pragma once

#include <iosfwd>

namespace aligncap {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// Entry point of the `aligncap` tool. Structured results go to `out`,
/// diagnostics to `err`; logging (ALIGNCAP_LOG) goes to stderr.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace aligncap
