#pragma once

#include <string>
#include <vector>

namespace endocss {

/// Full command-line surface behind main(). Returns the process exit code:
/// 0 success, 1 runtime failure, 2 invalid configuration or arguments.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, const char* const* argv);

}  // namespace endocss
