#pragma once

namespace swarmseg {

// Entry point behind the swarmseg binary: subcommands gen-world, train,
// simulate, eval, bench. Returns the process exit code (0 success,
// 2 configuration error, 3 data error).
int run_cli(int argc, const char* const* argv);

}  // namespace swarmseg
