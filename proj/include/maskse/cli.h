// Copyright 2026 maskse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef MASKSE_CLI_H_
#define MASKSE_CLI_H_

#include <ostream>

namespace maskse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;  // named library error
inline constexpr int kExitUsage = 2;

// Parses argv (argv[0] is the program name) and runs one subcommand.
int Run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace maskse::cli

#endif  // MASKSE_CLI_H_
