#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sode::cli {

/// Exit codes of run().
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;      // validation or domain error
inline constexpr int kExitNumerical = 3;  // numerical failure
inline constexpr int kExitUsage = 64;     // bad command line
inline constexpr int kExitInternal = 70;

/// Runs one sodekit invocation; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sode::cli
