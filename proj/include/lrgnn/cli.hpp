#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lrgnn {

// Exit statuses of the command-line driver.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,    // unknown subcommand or flag, missing argument
  kExitConfig = 3,   // unreadable or invalid configuration
  kExitSchema = 4,   // input file violates its schema
  kExitData = 5,     // unusable data (too few graphs, missing channels, I/O)
  kExitTraining = 6, // non-finite loss, every trial failed
};

// Runs one subcommand; args excludes the program name.
int run_command(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace lrgnn
