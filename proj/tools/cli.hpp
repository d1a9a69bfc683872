#pragma once
// Command-line front end. Exit codes: 0 ok, 1 unexpected failure, 2 usage,
// 3 data, 4 numerical.

#include <string>
#include <vector>

namespace hhmm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

int run(int argc, const char* const* argv);
// Arguments exclude the program name.
int run(const std::vector<std::string>& args);

}  // namespace hhmm::cli
