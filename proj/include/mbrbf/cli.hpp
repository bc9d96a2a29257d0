#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mbrbf {

/// Exit codes of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitDivergence = 2;

/// Entry point of the `mbrbf` tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mbrbf
