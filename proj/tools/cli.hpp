#pragma once

#include <string>
#include <vector>

namespace dexsynth {

/// Runs one dexsynth command. `args` excludes the program name. Returns the
/// process exit code; errors are reported on stderr.
int run_cli(const std::vector<std::string>& args);

}  // namespace dexsynth
