#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace omni::cli {

enum ExitCode : int { kOk = 0, kDivergence = 1, kUsage = 2, kRuntime = 3 };

// Runs one omni-decode invocation. `args` excludes the program name. Primary
// output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace omni::cli
