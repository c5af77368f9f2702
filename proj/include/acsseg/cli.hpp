#pragma once

// Command-line front end: train / eval / predict / synth.

#include <iosfwd>
#include <string>
#include <vector>

namespace acsseg {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitData = 2, kExitNumerical = 3 };

// Parses and runs one command. Diagnostics go to `err` as a single line
//   error kind=<config|data|numerical> exit=<code> msg="<reason>"
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace acsseg
