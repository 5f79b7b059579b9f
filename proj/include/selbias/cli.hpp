#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace selbias::cli {

enum ExitCode : int { ok = 0, usage = 1, partial = 2, provider_exhausted = 3 };

/// Entry point shared by the binary and the tests. argv[0] is the program name.
int run_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace selbias::cli
