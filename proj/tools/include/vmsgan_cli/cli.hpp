#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vmsgan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

/// Runs one command. `args` excludes the program name. Diagnostics go to
/// `err`, progress and summaries to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vmsgan::cli
