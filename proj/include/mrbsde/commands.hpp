#pragma once

// Command implementations behind the mrbsde executable.

#include "mrbsde/config.hpp"
#include "mrbsde/errors.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace mrbsde {

struct CommandResult {
    int exit_code = 0;
    Json summary = Json::object();  // deterministic metrics only
    std::vector<std::string> artifacts;
};

CommandResult cmd_simulate(const RunConfig& config, std::ostream& out);
CommandResult cmd_solve(const RunConfig& config, std::ostream& out);
CommandResult cmd_hedge(const RunConfig& config, std::ostream& out);
CommandResult cmd_validate(const RunConfig& config, std::ostream& out);

/// Loads the config, runs the verb, writes summary.json and run_record.json into the
/// output directory and maps errors onto exit codes (0 ok, 2 config, 3 infeasible,
/// 4 divergence, 5 tolerance failure).
int run_command(const std::string& verb, const std::string& config_path, const Overrides& overrides,
                std::ostream& out, std::ostream& err);

}  // namespace mrbsde
