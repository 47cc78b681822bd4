#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace vtsmp {

/// Exit statuses of the command-line tool.
inline constexpr int kExitPass = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `vtsmp` tool. args excludes the program name. Reports go
/// under --out; progress and diagnostics to `log`.
int run_cli(const std::vector<std::string>& args, std::ostream& log);

}  // namespace vtsmp
