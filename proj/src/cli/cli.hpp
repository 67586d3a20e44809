#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mbsmith::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kDomain = 3, kIo = 4 };

// args excludes the program name; args[0] is the subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// 17 significant digits, the format of every number in CSV and stdout output.
std::string format_number(double v);

}  // namespace mbsmith::cli
