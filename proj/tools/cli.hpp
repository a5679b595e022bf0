#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace foldmap {

inline constexpr const char* kToolVersion = "0.1.0";

/// Runs one foldmap command. `args` excludes the program name.
/// Returns 0 on success, otherwise the exit class of the failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace foldmap
