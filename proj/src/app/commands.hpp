#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

namespace rspde::app {

struct RunRequest {
    std::string command;  // simulate | penalize-sweep | compare | capacity | verify
    std::string config;
    std::string out;  // empty: output.dir from the config, else "out"
    std::optional<std::uint64_t> seed;
    std::optional<int> samples;
    int workers = 1;
};

/// Exit statuses of `run`.
enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kConfiguration = 2,
    kAssumption = 3,
    kSolver = 4,
    kArtifact = 5,
};

/// Runs one subcommand. On failure writes error.json (status, stage,
/// message) into the output directory and returns a nonzero status.
int run(const RunRequest& request, std::ostream& log);

}  // namespace rspde::app
