#pragma once

#include <iosfwd>

namespace drive {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // missing input, invalid data, runtime error
inline constexpr int kExitUsage = 2;    // unknown flag or subcommand

/// The `drive` command line. Diagnostics go to `err`, progress to `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace drive
