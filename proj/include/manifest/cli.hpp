#pragma once

#include <iosfwd>

namespace manifest {

enum ExitCode { kExitOk = 0, kExitUsage = 1, kExitIo = 2, kExitNumerical = 3 };

// Subcommands: synth-data, train, translate, evaluate, plot, inspect-weights.
// Every flag --some-key also reads `some_key = value` from --config FILE;
// flags win over the file, the file over built-in defaults.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace manifest
