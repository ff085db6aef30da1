#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace condel {

// Exit status of the operator command line.
enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitUsage = 2 };

// Runs one command; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace condel
