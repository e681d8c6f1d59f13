#pragma once

#include <string>
#include <vector>

namespace hns::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one `hns` command. Returns 0 on success, 1 on validation or usage
/// errors, 2 on runtime failures.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

}  // namespace hns::cli
