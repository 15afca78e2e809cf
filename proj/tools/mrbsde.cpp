#include "mrbsde/commands.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Mean-reflected BSDE solver for marked point process scenarios"};
    app.require_subcommand(1);

    std::string config;
    mrbsde::Overrides overrides;
    std::uint64_t seed = 0;
    std::size_t paths = 0;
    std::string out, format;

    for (const char* verb : {"simulate", "solve", "hedge", "validate"}) {
        auto* sub = app.add_subcommand(verb);
        sub->add_option("--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "override scenario.seed");
        sub->add_option("--paths", paths, "override scenario.paths")->check(CLI::PositiveNumber);
        sub->add_option("--out", out, "override output.directory");
        sub->add_option("--format", format, "table format")->check(CLI::IsMember({"csv", "json"}));
    }
    app.get_subcommand("simulate")->description("simulate a scenario bundle and write it out");
    app.get_subcommand("solve")->description("solve a mean-reflected BSDE");
    app.get_subcommand("hedge")->description("price and hedge an insurance contract under an ES constraint");
    app.get_subcommand("validate")->description("check assumptions and the contraction plan");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(mrbsde::ExitCode::config);
    }

    const auto* sub = app.get_subcommands().front();
    if (sub->count("--seed")) overrides.seed = seed;
    if (sub->count("--paths")) overrides.paths = paths;
    if (sub->count("--out")) overrides.out = out;
    if (sub->count("--format")) overrides.format = format;
    return mrbsde::run_command(sub->get_name(), config, overrides, std::cout, std::cerr);
}
