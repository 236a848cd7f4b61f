#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fscd::cli {

// Exit codes are a scripting contract.
enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kValidation = 2,
  kWouldOverwrite = 3,
  kNumeric = 4,
};

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fscd::cli
