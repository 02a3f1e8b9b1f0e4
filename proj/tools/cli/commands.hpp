#pragma once

#include <iosfwd>

namespace arae::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

/// Parses the command line and runs one command. Exit codes: 0 success,
/// 2 usage/config error, 3 numeric failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace arae::cli
