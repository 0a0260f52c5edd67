#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "sqlicl/error.hpp"

namespace sqlicl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitProvider = 3;

// 3 for provider and replay failures, 2 for usage, configuration and input
// problems, 1 otherwise.
int exit_code_for(ErrorCode code);

// Subcommands index, train, ask, eval, correct. args excludes the program
// name. Results go to out, messages to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sqlicl
