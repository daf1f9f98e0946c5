#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridcouple/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Coupled microgrid / data-center model analysis"};
    app.require_subcommand(1);

    gridcouple::cli::RunRequest req;
    std::size_t steps = 0;
    std::uint64_t seed = 0;

    const std::map<std::string, std::string> about{
        {"simulate", "run the discrete-time system from a perturbed equilibrium or a seed"},
        {"equilibrium", "solve F(x) = x for the scenario inputs"},
        {"stability", "eigenvalues of the Jacobian at the equilibrium"},
        {"controllability", "singular values of the controllability matrix"},
        {"lyapunov", "quadratic Lyapunov certificate and sampled decrease radius"},
        {"sweep", "spectral radius over a range of H slopes (gamma)"},
    };

    for (const auto& name : gridcouple::cli::commands()) {
        auto* sub = app.add_subcommand(name, about.at(name));
        sub->add_option("--scenario", req.scenario_path, "scenario file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", req.out_dir, "output directory")->required();
        sub->add_option("--steps", steps, "simulation steps (overrides the scenario)");
        sub->add_option("--gamma-list", req.gamma_list, "comma-separated gamma values for sweep")->delimiter(',');
        sub->add_option("--seed", seed, "random seed (overrides the scenario)");
        sub->callback([&req, name] { req.command = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : gridcouple::cli::kUsage;
    }
    for (auto* sub : app.get_subcommands()) {
        if (sub->count("--steps")) req.steps = steps;
        if (sub->count("--seed")) req.seed = seed;
    }
    return gridcouple::cli::run(req, std::cout);
}
