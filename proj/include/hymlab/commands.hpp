#ifndef HYMLAB_COMMANDS_HPP
#define HYMLAB_COMMANDS_HPP

// Subcommands behind the command-line tool. Each writes its artifacts into the
// configured output directory and returns the process exit status.

#include "hymlab/config.hpp"

#include <iosfwd>
#include <string>

namespace hymlab {

enum ExitStatus : int {
  kExitOk = 0,
  kExitCheckFailed = 1,  // verify failures, unexpected errors
  kExitRunFailed = 2,    // terminal continuation status other than REACHED_T1
  kExitConfig = 3,       // invalid configuration or unmet precondition
};

int cmd_solve(const RunConfig& cfg, std::ostream& log);
/// Continues from a checkpoint directory; artifacts go to `out_dir` (default: the checkpoint's run directory + "/resumed").
int cmd_resume(const std::string& checkpoint_dir, const std::string& out_dir, int threads, std::ostream& log);
int cmd_verify(const RunConfig& cfg, std::ostream& log);
int cmd_mavol(const RunConfig& cfg, std::ostream& log);
/// which: split | extension | shrink
int cmd_experiment(const RunConfig& cfg, const std::string& which, std::ostream& log);

}  // namespace hymlab

#endif  // HYMLAB_COMMANDS_HPP
