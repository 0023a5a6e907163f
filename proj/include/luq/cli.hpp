#pragma once

// The `luq` command-line surface: fit, score, eval, toy and pca. Kept in
// the library so tests can drive it in-process.
//
// Exit codes: 0 success, 2 usage error (bad flags or config), 3 data error
// (unreadable, malformed or inconsistent inputs, unwritable outputs).

#include <iosfwd>
#include <string>
#include <vector>

namespace luq {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;

// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace luq
