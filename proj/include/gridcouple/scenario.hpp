#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gridcouple/analysis.hpp"
#include "gridcouple/coupling.hpp"
#include "gridcouple/microgrid.hpp"
#include "gridcouple/wann.hpp"

namespace gridcouple::cli {

enum class Mode { Coupled, Uncoupled };

struct NamedValue {
    std::string name;
    double value = 0.0;
};

struct Seed {
    std::string name;
    std::vector<NamedValue> states;  // unlisted states start at 0
};

struct SimulateSettings {
    std::string initial = "equilibrium";  // or a seed name
    double perturbation = 1e-3;           // relative, applied to the initial state
    std::size_t steps = 100000;
    std::size_t stride = 100;
};

struct LyapunovSettings {
    std::size_t samples = 10000;
    double radius = 1.0;  // starting radius of the verified-neighbourhood search
};

struct SweepSettings {
    double gamma_min = -1.0;
    double gamma_max = 0.005;
    std::size_t points = 50;
};

/// Everything one run needs. Produced only by load_scenario / parse_scenario, which
/// check every module invariant.
struct Scenario {
    std::string name;
    Mode mode = Mode::Coupled;
    double dt = 0.001;
    microgrid::MicrogridParams microgrid;
    wann::WannParams wann = wann::WannParams::reference();
    coupling::CouplingParams coupling;
    std::vector<coupling::CouplingTerm> terms;
    std::vector<NamedValue> inputs;  // free controls and disturbances by merged name
    std::vector<Seed> seeds;

    analysis::EquilibriumOptions equilibrium;
    double tol_margin = 1e-9;
    LyapunovSettings lyapunov;
    double controllability_floor = 0.0;
    SimulateSettings simulate;
    SweepSettings sweep;
    std::uint64_t seed = 1;

    /// "section.key = value" for every key the file left at its default.
    std::vector<std::string> defaults_applied;
};

/// The composed system with its free-variable vectors and equilibrium seeds.
struct BuiltSystem {
    coupling::CoupledSystem system;
    Vec u;
    Vec d;
    std::vector<Vec> seeds;
};

/// Builds the coupled (or side-by-side uncoupled) system. `gamma` overrides the H slope.
[[nodiscard]] BuiltSystem build_system(const Scenario& s, std::optional<double> gamma = std::nullopt);

/// Parses `text`; `origin` names the file in messages and anchors relative paths.
[[nodiscard]] Scenario parse_scenario(std::string_view text, const std::string& origin = "<scenario>");
[[nodiscard]] Scenario load_scenario(const std::string& path);

}  // namespace gridcouple::cli
