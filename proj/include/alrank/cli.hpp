#ifndef ALRANK_CLI_HPP
#define ALRANK_CLI_HPP

#include <ostream>

namespace alrank {

/// Entry point of the `alrank` tool. Returns the process exit code; output
/// and diagnostics go to the given streams.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace alrank

#endif  // ALRANK_CLI_HPP
