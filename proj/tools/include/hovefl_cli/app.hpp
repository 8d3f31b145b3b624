#pragma once

#include <string>
#include <vector>

namespace hovefl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInvalidConfig = 2;
inline constexpr int kExitDivergence = 3;

// Log verbosity is read from this variable (trace, debug, info, warn,
// error, off). Default: info.
inline constexpr const char* kLogLevelEnv = "HOVEFL_LOG_LEVEL";

// Entry point shared by the executable and the tests. args[0] is the
// program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace hovefl::cli
