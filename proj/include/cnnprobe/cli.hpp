#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cnnprobe {

// Exit-code contract of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,  // bad flags, DSL parse errors, invalid selections
  kExitIo = 3,     // unreadable/unwritable files, malformed weight or image files
  kExitData = 4,   // violated data preconditions (empty manifest, infeasible perplexity, ...)
};

// Runs the tool with args (args[0] is the program name). Output files are
// published only when the whole subcommand succeeds.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cnnprobe
