#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace seld {

inline constexpr const char* kToolVersion = "0.1.0";

// Entry point of the `seld` executable. Returns the process exit code:
// 0 success, 1 input error, 2 numerical failure.
int cli_main(int argc, char** argv);
// Same, with explicit streams so tests can capture output.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace seld
