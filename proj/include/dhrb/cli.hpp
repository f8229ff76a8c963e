#ifndef DHRB_CLI_HPP
#define DHRB_CLI_HPP

#include <ostream>

namespace dhrb {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitRuntime = 1,
  kExitUsage = 2,
  kExitNoTrainer = 3,
};

/// Entry point of the `dhrb` tool: simulate, register, dof (alias evaluate), train, infer.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dhrb

#endif  // DHRB_CLI_HPP
