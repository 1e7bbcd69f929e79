#include "commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App cli{"Monte Carlo laboratory for obstacle problems of quasilinear SPDEs"};
    cli.require_subcommand(1);

    rspde::app::RunRequest request;
    std::uint64_t seed = 0;
    int samples = 0;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", request.config, "Run configuration (key = value)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", request.out, "Output directory (default: output.dir or ./out)");
        sub->add_option("--seed", seed, "Base seed, overrides noise.seed");
        sub->add_option("--samples", samples, "Number of samples, overrides noise.samples");
        sub->add_option("--workers", request.workers, "Worker threads")->check(CLI::PositiveNumber);
    };
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"simulate", "Solve each sample, run the configured checks, write u/measure/noise and a summary"},
        {"penalize-sweep", "Distance of penalized solutions to the projected one over sweep.penalties"},
        {"compare", "Shared-noise comparison of the base problem and a shifted copy"},
        {"capacity", "Capacity of the configured time slice"},
        {"verify", "Replay stored samples through the residual and estimate checks"},
    };
    for (const auto& [name, help] : commands) add_common(cli.add_subcommand(name, help));

    CLI11_PARSE(cli, argc, argv);
    for (const auto* sub : cli.get_subcommands()) request.command = sub->get_name();
    const auto* sub = cli.get_subcommand(request.command);
    if (sub->count("--seed")) request.seed = seed;
    if (sub->count("--samples")) request.samples = samples;
    return rspde::app::run(request, std::cout);
}
