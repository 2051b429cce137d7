#pragma once

#include <string>
#include <vector>

namespace mld::cli {

// Exit codes of the mld tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIo = 4;

// Parses and runs one command; args[0] is the program name. Errors are
// reported on stderr and mapped to the exit codes above.
int run(const std::vector<std::string>& args);

}  // namespace mld::cli
