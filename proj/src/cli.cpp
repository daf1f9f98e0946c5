#include "gridcouple/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <random>

#include <json.hpp>

#include "gridcouple/log.hpp"
#include "gridcouple/scenario.hpp"

namespace gridcouple::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class RunLog {
public:
    explicit RunLog(const fs::path& path) : out_(path, std::ios::binary | std::ios::trunc) {}
    void write(json record) {
        if (out_) out_ << record.dump() << '\n';
    }

private:
    std::ofstream out_;
};

class Csv {
public:
    Csv(const fs::path& path, const std::vector<std::string>& header) : out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw ConfigError("cannot write " + path.string());
        row(header);
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

struct Context {
    const RunRequest& req;
    const Scenario& scenario;
    const BuiltSystem& built;
    fs::path out;
    RunLog& log;
    std::ostream& console;
};

analysis::EquilibriumResult solve(const Context& c) {
    const auto& F = c.built.system.model();
    auto eq = analysis::find_equilibrium(F, std::span<const Vec>(c.built.seeds), c.built.u, c.built.d,
                                         c.scenario.equilibrium);
    const auto seed_name = c.scenario.seeds.empty() ? std::string("zero") : c.scenario.seeds[eq.seed_index].name;
    c.log.write({{"event", "equilibrium"},
                 {"converged", eq.converged},
                 {"residual_inf", eq.residual_norm},
                 {"iterations", eq.iterations},
                 {"seed", seed_name},
                 {"prerolled", eq.prerolled},
                 {"message", eq.message}});
    c.console << "equilibrium: " << (eq.converged ? "converged" : "NOT converged") << ", residual "
              << num(eq.residual_norm) << ", " << eq.iterations << " iterations from seed " << seed_name << "\n";
    return eq;
}

void write_equilibrium(const Context& c, const analysis::EquilibriumResult& eq) {
    const auto& sys = c.built.system;
    const auto& sig = sys.model().signals();
    Csv csv(c.out / "equilibrium.csv", {"signal", "value", "unit"});
    for (std::size_t i = 0; i < sig.states.size(); ++i) {
        csv.row({sig.states[i].name, num(eq.x_bar[static_cast<Eigen::Index>(i)]), sig.states[i].unit});
    }
    const Vec y = sys.outputs(eq.x_bar);
    for (std::size_t i = 0; i < sig.outputs.size(); ++i) {
        csv.row({sig.outputs[i].name, num(y[static_cast<Eigen::Index>(i)]), sig.outputs[i].unit});
    }
    const Vec cv = sys.coupling_values(eq.x_bar, eq.u_bar, eq.d_bar);
    const auto names = sys.coupling_names();
    const auto units = sys.coupling_units();
    for (std::size_t i = 0; i < names.size(); ++i) csv.row({names[i], num(cv[static_cast<Eigen::Index>(i)]), units[i]});
}

void write_eigenvalues(const fs::path& path, const analysis::CVec& ev) {
    Csv csv(path, {"re", "im", "magnitude", "index"});
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        csv.row({num(ev[i].real()), num(ev[i].imag()), num(std::abs(ev[i])), std::to_string(i)});
    }
}

int cmd_equilibrium(const Context& c) {
    const auto eq = solve(c);
    write_equilibrium(c, eq);
    return eq.converged ? kOk : kConvergence;
}

int cmd_stability(const Context& c) {
    const auto eq = solve(c);
    write_equilibrium(c, eq);
    if (!eq.converged) return kConvergence;
    const auto rep = analysis::stability_local(c.built.system.model(), eq, c.scenario.tol_margin,
                                               c.scenario.equilibrium.jacobian);
    write_eigenvalues(c.out / "eigenvalues.csv", rep.eigenvalues);
    c.log.write({{"event", "stability"},
                 {"classification", std::string(analysis::to_string(rep.classification))},
                 {"spectral_radius", rep.spectral_radius},
                 {"n_outside", rep.n_outside}});
    c.console << "stability: " << analysis::to_string(rep.classification) << ", spectral radius "
              << num(rep.spectral_radius) << ", " << rep.n_outside << " outside the unit circle\n";
    return kOk;
}

int cmd_lyapunov(const Context& c) {
    const auto eq = solve(c);
    if (!eq.converged) return kConvergence;
    const auto& F = c.built.system.model();
    const auto lin = analysis::jacobian_fd(F, eq.x_bar, eq.u_bar, eq.d_bar, c.scenario.equilibrium.jacobian);
    const auto lyap = analysis::lyapunov_quadratic(lin.A);
    Csv csv(c.out / "lyapunov.csv", {"quantity", "value"});
    csv.row({"certified", lyap.certified ? "1" : "0"});
    csv.row({"marginal", lyap.marginal ? "1" : "0"});
    json rec{{"event", "lyapunov"}, {"certified", lyap.certified}, {"marginal", lyap.marginal}, {"message", lyap.message}};
    if (lyap.P.size()) {
        csv.row({"P_min_eigenvalue", num(lyap.min_eigenvalue)});
        rec["P_min_eigenvalue"] = lyap.min_eigenvalue;
    }
    if (lyap.certified) {
        const auto chk = analysis::verified_radius(F, eq.x_bar, eq.u_bar, eq.d_bar, lyap.P, c.scenario.lyapunov.radius,
                                                   c.scenario.lyapunov.samples, c.req.seed.value_or(c.scenario.seed));
        csv.row({"verified_radius", num(chk.radius)});
        csv.row({"samples", std::to_string(chk.samples)});
        csv.row({"failures", std::to_string(chk.failures)});
        rec["verified_radius"] = chk.radius;
        rec["samples"] = chk.samples;
    }
    c.log.write(rec);
    c.console << "lyapunov: " << lyap.message << "\n";
    return kOk;
}

int cmd_controllability(const Context& c) {
    const auto eq = solve(c);
    if (!eq.converged) return kConvergence;
    const auto lin = analysis::jacobian_fd(c.built.system.model(), eq.x_bar, eq.u_bar, eq.d_bar,
                                           c.scenario.equilibrium.jacobian);
    const auto rep = analysis::controllability_rank(lin, c.scenario.controllability_floor);
    Csv csv(c.out / "controllability.csv", {"index", "singular_value", "above_threshold"});
    for (Eigen::Index i = 0; i < rep.singular_values.size(); ++i) {
        csv.row({std::to_string(i), num(rep.singular_values[i]), rep.singular_values[i] > rep.threshold ? "1" : "0"});
    }
    c.log.write({{"event", "controllability"},
                 {"rank", rep.rank},
                 {"state_dim", rep.state_dim},
                 {"threshold", rep.threshold}});
    c.console << "controllability: rank " << rep.rank << " of " << rep.state_dim << " (threshold " << num(rep.threshold)
              << ")\n";
    return kOk;
}

int cmd_simulate(const Context& c) {
    const auto& s = c.scenario;
    Vec x0;
    if (s.simulate.initial == "equilibrium") {
        const auto eq = solve(c);
        if (!eq.converged) return kConvergence;
        x0 = eq.x_bar;
    } else {
        for (std::size_t i = 0; i < s.seeds.size(); ++i) {
            if (s.seeds[i].name == s.simulate.initial) x0 = c.built.seeds[i];
        }
    }
    std::mt19937_64 rng(c.req.seed.value_or(s.seed));
    std::bernoulli_distribution coin;
    if (s.simulate.perturbation > 0.0) {
        for (Eigen::Index i = 0; i < x0.size(); ++i) {
            const double sign = coin(rng) ? 1.0 : -1.0;
            x0[i] += sign * s.simulate.perturbation * std::max(std::abs(x0[i]), 1.0);
        }
    }
    analysis::SimulationOptions opt;
    opt.steps = c.req.steps.value_or(s.simulate.steps);
    opt.stride = s.simulate.stride;
    const auto tr = analysis::simulate(c.built.system, x0, analysis::InputSequence::constant(c.built.u, c.built.d), opt);

    std::vector<std::string> header{"step", "time_s"};
    header.insert(header.end(), tr.columns.begin(), tr.columns.end());
    Csv csv(c.out / "trajectory.csv", header);
    for (std::size_t r = 0; r < tr.rows.size(); ++r) {
        std::vector<std::string> cells{std::to_string(tr.steps[r]), num(tr.times[r])};
        for (Eigen::Index i = 0; i < tr.rows[r].size(); ++i) cells.push_back(num(tr.rows[r][i]));
        csv.row(cells);
    }
    json rec{{"event", "simulate"}, {"steps", opt.steps}, {"rows", tr.rows.size()}, {"diverged", tr.diverged}};
    if (tr.diverged) {
        rec["divergence_step"] = tr.divergence_step;
        rec["divergence_signal"] = tr.divergence_signal;
        c.console << "simulate: diverged at step " << tr.divergence_step << " in " << tr.divergence_signal << "\n";
    } else {
        c.console << "simulate: " << opt.steps << " steps\n";
    }
    c.log.write(rec);
    return tr.diverged ? kDivergence : kOk;
}

int cmd_sweep(const Context& c) {
    const auto& s = c.scenario;
    if (s.mode != Mode::Coupled) throw ConfigError("sweep needs a coupled scenario");
    if (!s.coupling.h.is_linear()) throw ConfigError("sweep needs the linear H family (coupling.H = linear)");
    std::vector<double> gammas = c.req.gamma_list;
    if (gammas.empty()) {
        const auto n = s.sweep.points;
        for (std::size_t i = 0; i < n; ++i) {
            if (n == 1) gammas.push_back(s.sweep.gamma_min);
            else if (i + 1 == n) gammas.push_back(s.sweep.gamma_max);
            else gammas.push_back(s.sweep.gamma_min + (s.sweep.gamma_max - s.sweep.gamma_min) *
                                                          static_cast<double>(i) / static_cast<double>(n - 1));
        }
    }
    analysis::SweepOptions opt;
    opt.equilibrium = s.equilibrium;
    opt.tol_margin = s.tol_margin;
    const auto rows = analysis::gamma_sweep([&s](double g) { return build_system(s, g).system; }, gammas,
                                            c.built.seeds, c.built.u, c.built.d, opt);
    Csv csv(c.out / "sweep.csv", {"gamma", "spectral_radius", "n_outside", "converged"});
    bool all = true;
    for (const auto& r : rows) {
        csv.row({num(r.gamma), num(r.spectral_radius), std::to_string(r.n_outside), r.converged ? "1" : "0"});
        all = all && r.converged;
        c.log.write({{"event", "sweep_point"},
                     {"gamma", r.gamma},
                     {"converged", r.converged},
                     {"spectral_radius", r.spectral_radius},
                     {"n_outside", r.n_outside},
                     {"max_pair_jump", r.max_pair_jump},
                     {"message", r.message}});
    }
    c.console << "sweep: " << rows.size() << " points" << (all ? "" : " (some did not converge)") << "\n";
    return all ? kOk : kConvergence;
}

}  // namespace

const std::vector<std::string>& commands() {
    static const std::vector<std::string> names{"simulate", "equilibrium", "stability", "controllability", "lyapunov",
                                                "sweep"};
    return names;
}

int run(const RunRequest& req, std::ostream& console) {
    const fs::path out(req.out_dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) {
        console << "error: cannot create " << out.string() << ": " << ec.message() << "\n";
        return kUsage;
    }
    RunLog log(out / "run.log");
    log.write({{"event", "start"}, {"command", req.command}, {"scenario", req.scenario_path}});
    auto finish = [&](int code, const std::string& kind = {}, const std::string& message = {}) {
        if (!kind.empty()) {
            log.write({{"event", "error"}, {"kind", kind}, {"message", message}});
            console << kind << " error: " << message << "\n";
        }
        log.write({{"event", "end"}, {"exit_code", code}});
        return code;
    };

    std::vector<std::string> warnings;
    auto previous = set_warning_sink([&warnings](const std::string& m) { warnings.push_back(m); });
    struct Restore {
        WarningSink sink;
        ~Restore() { set_warning_sink(std::move(sink)); }
    } restore{std::move(previous)};
    auto flush_warnings = [&] {
        for (const auto& w : warnings) log.write({{"event", "warning"}, {"message", w}});
        warnings.clear();
    };

    try {
        if (std::find(commands().begin(), commands().end(), req.command) == commands().end()) {
            return finish(kUsage, "usage", "unknown command '" + req.command + "'");
        }
        const auto scenario = load_scenario(req.scenario_path);
        for (const auto& d : scenario.defaults_applied) log.write({{"event", "default"}, {"setting", d}});
        const auto built = build_system(scenario);
        Context ctx{req, scenario, built, out, log, console};
        int code = kOk;
        if (req.command == "equilibrium") code = cmd_equilibrium(ctx);
        else if (req.command == "stability") code = cmd_stability(ctx);
        else if (req.command == "lyapunov") code = cmd_lyapunov(ctx);
        else if (req.command == "controllability") code = cmd_controllability(ctx);
        else if (req.command == "simulate") code = cmd_simulate(ctx);
        else code = cmd_sweep(ctx);
        flush_warnings();
        if (code == kConvergence) return finish(code, "convergence", "equilibrium solve did not converge");
        return finish(code);
    } catch (const UsageError& e) {
        flush_warnings();
        return finish(kUsage, "usage", e.what());
    } catch (const ConfigError& e) {
        flush_warnings();
        return finish(kConfig, "config", e.what());
    } catch (const NumericalError& e) {
        flush_warnings();
        return finish(kConvergence, "numerical", e.what());
    }
}

}  // namespace gridcouple::cli
