#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ckl::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kTrainingAborted = 3, kCheckpointMismatch = 4 };

/// Runs the `ckl` command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ckl::cli
