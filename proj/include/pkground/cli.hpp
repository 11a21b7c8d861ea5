#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pkground {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2 };

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

}  // namespace pkground
