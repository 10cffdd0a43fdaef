#pragma once

#include <ostream>

namespace fehforge::cli {

/// Entry point for `feh-forge <command> [options]`. Returns the process exit code:
/// 0 on success, 2 for usage errors, otherwise `exit_code()` of the failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Environment variable naming the default output root.
inline constexpr const char* kOutputEnv = "FEH_FORGE_OUTPUT";

}  // namespace fehforge::cli
