#ifndef DEEPMORPH_CLI_HPP_
#define DEEPMORPH_CLI_HPP_

#include <iosfwd>

namespace deepmorph {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

/// Entry point of the command-line tool (subcommands generate, train, eval,
/// gradcheck, sweep, visualize). Returns the process exit code; never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace deepmorph

#endif  // DEEPMORPH_CLI_HPP_
