#pragma once

#include <string>
#include <vector>

namespace dafm::cli {

/// Exit codes of the command-line tool.
enum ExitCode : int { success = 0, failure = 1, usage_error = 2, numerical_error = 3 };

/// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "DAFM_OUTPUT_DIR";

/// Runs the tool; `args` excludes the program name.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace dafm::cli
