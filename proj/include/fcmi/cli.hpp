#pragma once

#include <string>
#include <vector>

namespace fcmi::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Exit codes: 0 success, 1 runtime failure, 2 usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point for the `fcmi` tool; argv[0] is the program name.
/// Subcommands: synth, train, eval, metrics.
int run(const std::vector<std::string>& argv);

}  // namespace fcmi::cli
