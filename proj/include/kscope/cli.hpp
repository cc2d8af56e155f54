#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace kscope::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

/// Parses and executes one subcommand. Errors are reported on stderr as a
/// single line "error: <usage|data|numerical>: <reason>".
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args[0] is the program name

/// Desk or paper profile from the versioned defaults file compiled into the binary.
nlohmann::json profile_defaults(const std::string& profile);

}  // namespace kscope::cli
