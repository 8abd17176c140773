#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ccnet::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kIo = 3;
inline constexpr int kInvalid = 4;
inline constexpr int kGradcheckFailed = 5;

/// Runs one command. `args` excludes the program name. Results go to `out`,
/// errors and progress to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ccnet::cli
