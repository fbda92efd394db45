#pragma once

namespace dlsr::cli {

// Runs one subcommand. Returns 0 on success, 1 on a runtime error (one "error: ..." line on stderr)
// and 2 on a usage error.
int dispatch(int argc, const char* const* argv);

}  // namespace dlsr::cli
