#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cloudrm::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kIo = 3,
  kNotConverged = 4,
};

/// Entry point of the `cloudrm` tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_cli(int argc, char** argv);

}  // namespace cloudrm::cli
