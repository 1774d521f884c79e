#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace coat::tools {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitBackend = 3;

/// Entry point behind the `coat` binary. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace coat::tools
