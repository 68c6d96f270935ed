#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mmh {

/// Runs `mmh <setup|train|generate> [flags]`. `args` excludes the program name.
/// Returns 0 on success, 1 on usage, configuration or validation errors and
/// 2 on runtime failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mmh
