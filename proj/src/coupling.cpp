#include "gridcouple/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace gridcouple::coupling {
namespace {

bool is_identifier(std::string_view s) {
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool is_qualified(const std::string& name) { return name.find('.') != std::string::npos; }

const std::set<std::string>& constant_names() {
    static const std::set<std::string> names{"COP", "R_DC"};
    return names;
}

const std::set<std::string>& function_names() {
    static const std::set<std::string> names{"H", "to_kW"};
    return names;
}

enum class Source { State, Control, Disturbance, Output };

struct Resolved {
    std::size_t subsystem;
    Source source;
    std::size_t index;
};

std::optional<std::size_t> find_subsystem(std::span<const SubsystemModel> subsystems, const std::string& id) {
    for (std::size_t i = 0; i < subsystems.size(); ++i) {
        if (subsystems[i].id() == id) return i;
    }
    return std::nullopt;
}

Resolved resolve(std::span<const SubsystemModel> subsystems, const SignalRef& ref) {
    const auto sub = find_subsystem(subsystems, ref.subsystem);
    if (!sub) throw ConfigError("unknown subsystem '" + ref.subsystem + "' in " + ref.qualified());
    const auto& s = subsystems[*sub].signals();
    if (auto i = s.states.find(ref.signal)) return {*sub, Source::State, *i};
    if (auto i = s.controls.find(ref.signal)) return {*sub, Source::Control, *i};
    if (auto i = s.disturbances.find(ref.signal)) return {*sub, Source::Disturbance, *i};
    if (auto i = s.outputs.find(ref.signal)) return {*sub, Source::Output, *i};
    throw ConfigError("unknown signal '" + ref.qualified() + "'");
}

void check_names(const CouplingTerm& t) {
    for (const auto& name : t.expression.references()) {
        if (!is_qualified(name) && !constant_names().contains(name)) {
            throw ConfigError("unknown constant '" + name + "' in " + t.to_string());
        }
    }
    for (const auto& name : t.expression.functions()) {
        if (!function_names().contains(name)) throw ConfigError("unknown function '" + name + "' in " + t.to_string());
    }
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

// Edges i -> j when term i reads the receiver of term j.
std::vector<std::vector<std::size_t>> dependency_graph(std::span<const CouplingTerm> terms) {
    std::vector<std::vector<std::size_t>> deps(terms.size());
    for (std::size_t i = 0; i < terms.size(); ++i) {
        for (const auto& ref : terms[i].signal_refs()) {
            for (std::size_t j = 0; j < terms.size(); ++j) {
                if (terms[j].receiver == ref && std::find(deps[i].begin(), deps[i].end(), j) == deps[i].end()) {
                    deps[i].push_back(j);
                }
            }
        }
    }
    return deps;
}

std::vector<std::vector<std::size_t>> find_cycles(const std::vector<std::vector<std::size_t>>& deps) {
    enum class Mark { White, Grey, Black };
    std::vector<Mark> mark(deps.size(), Mark::White);
    std::vector<std::size_t> stack;
    std::vector<std::vector<std::size_t>> cycles;
    std::set<std::set<std::size_t>> seen;

    std::function<void(std::size_t)> visit = [&](std::size_t v) {
        mark[v] = Mark::Grey;
        stack.push_back(v);
        for (std::size_t w : deps[v]) {
            if (mark[w] == Mark::Grey) {
                auto from = std::find(stack.begin(), stack.end(), w);
                std::vector<std::size_t> cycle(from, stack.end());
                cycle.push_back(w);
                std::set<std::size_t> key(cycle.begin(), cycle.end());
                if (seen.insert(key).second) cycles.push_back(std::move(cycle));
            } else if (mark[w] == Mark::White) {
                visit(w);
            }
        }
        stack.pop_back();
        mark[v] = Mark::Black;
    };
    for (std::size_t v = 0; v < deps.size(); ++v) {
        if (mark[v] == Mark::White) visit(v);
    }
    return cycles;
}

// Dependencies first; ties broken by declaration order.
std::vector<std::size_t> topological_order(const std::vector<std::vector<std::size_t>>& deps) {
    const std::size_t n = deps.size();
    std::vector<std::size_t> pending(n);
    std::vector<std::vector<std::size_t>> dependents(n);
    for (std::size_t i = 0; i < n; ++i) {
        pending[i] = deps[i].size();
        for (std::size_t j : deps[i]) dependents[j].push_back(i);
    }
    std::set<std::size_t> ready;
    for (std::size_t i = 0; i < n; ++i) {
        if (pending[i] == 0) ready.insert(i);
    }
    std::vector<std::size_t> order;
    while (!ready.empty()) {
        const std::size_t i = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(i);
        for (std::size_t k : dependents[i]) {
            if (--pending[k] == 0) ready.insert(k);
        }
    }
    if (order.size() != n) throw ConfigError("coupling terms are cyclic");
    return order;
}

}  // namespace

SignalRef SignalRef::parse(std::string_view qualified) {
    const auto s = trim(qualified);
    const auto dot = s.find('.');
    if (dot == std::string_view::npos || !is_identifier(s.substr(0, dot)) || !is_identifier(s.substr(dot + 1))) {
        throw ConfigError("expected subsystem.signal, got '" + std::string(s) + "'");
    }
    return {std::string(s.substr(0, dot)), std::string(s.substr(dot + 1))};
}

CouplingTerm CouplingTerm::parse(std::string_view receiver, std::string_view expression,
                                 expr::SourceLocation where) {
    return {SignalRef::parse(receiver), expr::Expression::parse(expression, where)};
}

CouplingTerm CouplingTerm::parse_line(std::string_view line, expr::SourceLocation where) {
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw expr::ParseError("expected 'receiver = expression'", where);
    expr::SourceLocation rhs = where;
    rhs.column += static_cast<int>(eq + 1);
    return parse(line.substr(0, eq), line.substr(eq + 1), rhs);
}

std::vector<SignalRef> CouplingTerm::signal_refs() const {
    std::vector<SignalRef> out;
    for (const auto& name : expression.references()) {
        if (is_qualified(name)) out.push_back(SignalRef::parse(name));
    }
    return out;
}

HFunction HFunction::linear(double h0, double t_ref, double gamma) {
    HFunction h;
    h.h0_ = h0;
    h.t_ref_ = t_ref;
    h.gamma_ = gamma;
    return h;
}

HFunction HFunction::table(std::vector<double> temperature, std::vector<double> value) {
    if (temperature.size() < 2 || temperature.size() != value.size()) {
        throw ConfigError("H table needs at least two (T, H) pairs of equal length");
    }
    for (std::size_t i = 1; i < temperature.size(); ++i) {
        if (!(temperature[i] > temperature[i - 1])) throw ConfigError("H table temperatures must increase strictly");
    }
    HFunction h;
    h.temperature_ = std::move(temperature);
    h.value_ = std::move(value);
    return h;
}

double HFunction::operator()(double t) const {
    if (is_linear()) return h0_ * (1.0 + gamma_ * (t - t_ref_));
    const auto& x = temperature_;
    auto hi = std::upper_bound(x.begin() + 1, x.end() - 1, t);
    const std::size_t i = static_cast<std::size_t>(hi - x.begin());
    const double s = (value_[i] - value_[i - 1]) / (x[i] - x[i - 1]);
    return value_[i - 1] + s * (t - x[i - 1]);
}

HFunction HFunction::with_gamma(double gamma) const {
    if (!is_linear()) throw ConfigError("gamma applies only to the linear H family");
    return linear(h0_, t_ref_, gamma);
}

void HFunction::validate(const std::string& path) const {
    if (is_linear()) {
        if (!std::isfinite(h0_)) throw ConfigError(path + ".H0 must be finite");
        if (!std::isfinite(t_ref_)) throw ConfigError(path + ".T_ref must be finite");
        if (!std::isfinite(gamma_)) throw ConfigError(path + ".gamma must be finite");
        return;
    }
    for (double v : value_) {
        if (!std::isfinite(v)) throw ConfigError(path + ".H_table values must be finite");
    }
}

void CouplingParams::validate(const std::string& prefix) const {
    if (!(cop > 0.0) || !std::isfinite(cop)) throw ConfigError(prefix + ".COP must be positive");
    if (!(r_dc > 0.0) || !std::isfinite(r_dc)) throw ConfigError(prefix + ".R_DC must be positive");
    h.validate(prefix);
}

double eval_H(const CouplingParams& p, double t_rack) { return p.h(t_rack); }

bool ValidationReport::cites(int guideline) const {
    return std::any_of(violations.begin(), violations.end(),
                       [guideline](const Violation& v) { return v.guideline == guideline; });
}

std::string ValidationReport::to_string() const {
    if (ok()) return "coupling terms valid";
    std::ostringstream os;
    for (std::size_t i = 0; i < violations.size(); ++i) {
        if (i) os << "\n";
        os << "guideline " << violations[i].guideline << ": " << violations[i].message;
    }
    return os.str();
}

CouplingRejected::CouplingRejected(ValidationReport report)
    : ConfigError("coupling rejected\n" + report.to_string()), report_(std::move(report)) {}

ValidationReport validate(std::span<const CouplingTerm> terms, std::span<const SubsystemModel> subsystems) {
    ValidationReport report;

    for (std::size_t i = 0; i < terms.size(); ++i) {
        const auto& t = terms[i];
        check_names(t);
        const auto recv = resolve(subsystems, t.receiver);
        std::vector<std::string> involved{t.receiver.subsystem};
        for (const auto& ref : t.signal_refs()) {
            resolve(subsystems, ref);
            if (std::find(involved.begin(), involved.end(), ref.subsystem) == involved.end()) {
                involved.push_back(ref.subsystem);
            }
        }
        if (involved.size() > 2) {
            report.violations.push_back({1,
                                         "term " + std::to_string(i) + " (" + t.to_string() + ") involves " +
                                             std::to_string(involved.size()) + " models: " + join(involved, ", "),
                                         {i},
                                         {}});
        }
        if (recv.source != Source::Control && recv.source != Source::Disturbance) {
            report.violations.push_back({2,
                                         "term " + std::to_string(i) + " assigns " + t.receiver.qualified() +
                                             ", which is not an input",
                                         {i},
                                         {}});
        }
    }

    std::map<std::string, std::vector<std::size_t>> by_receiver;
    for (std::size_t i = 0; i < terms.size(); ++i) by_receiver[terms[i].receiver.qualified()].push_back(i);
    for (std::size_t i = 0; i < terms.size(); ++i) {
        const auto& same = by_receiver[terms[i].receiver.qualified()];
        if (same.size() > 1 && same.front() == i) {
            std::vector<std::string> idx;
            for (auto k : same) idx.push_back(std::to_string(k));
            report.violations.push_back({3,
                                         terms[i].receiver.qualified() + " is assigned by terms " + join(idx, ", "),
                                         same,
                                         {}});
        }
    }

    for (const auto& cycle : find_cycles(dependency_graph(terms))) {
        Violation v{4, {}, {}, {}};
        for (std::size_t k = 0; k < cycle.size(); ++k) {
            v.cycle.push_back(terms[cycle[k]].receiver.qualified());
            if (k + 1 < cycle.size()) v.terms.push_back(cycle[k]);
        }
        v.message = "algebraic loop " + join(v.cycle, " -> ");
        report.violations.push_back(std::move(v));
    }
    return report;
}

// ---------------------------------------------------------------------------

struct CoupledSystem::Impl {
    struct Slot {
        enum class Kind { Signal, Receiver, Constant } kind;
        Resolved signal{};
        std::size_t term = 0;
        double value = 0.0;
    };
    struct Target {
        std::size_t subsystem;
        bool control;
        std::size_t index;
    };

    std::vector<SubsystemModel> subsystems;
    std::vector<CouplingTerm> terms;  // topological order
    CouplingParams params;
    std::vector<expr::BoundExpression> bound;
    std::vector<Target> targets;
    std::vector<std::size_t> receiver_slot;
    std::vector<Slot> slots;
    std::vector<std::size_t> state_offset;
    std::vector<std::pair<std::size_t, std::size_t>> free_controls;
    std::vector<std::pair<std::size_t, std::size_t>> free_disturbances;
    std::vector<bool> reads_output;
    std::vector<std::string> coupling_names;
    std::vector<std::string> coupling_units;

    struct Inputs {
        std::vector<Vec> x, u, d;
        Vec coupling;
    };

    Inputs prepare(const Vec& x, const Vec& u, const Vec& d) const {
        Inputs in;
        const std::size_t n = subsystems.size();
        in.x.resize(n);
        in.u.resize(n);
        in.d.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& s = subsystems[i];
            in.x[i] = x.segment(static_cast<Eigen::Index>(state_offset[i]), static_cast<Eigen::Index>(s.state_dim()));
            in.u[i] = Vec::Zero(static_cast<Eigen::Index>(s.control_dim()));
            in.d[i] = Vec::Zero(static_cast<Eigen::Index>(s.disturbance_dim()));
        }
        for (std::size_t j = 0; j < free_controls.size(); ++j) {
            in.u[free_controls[j].first][static_cast<Eigen::Index>(free_controls[j].second)] = u[static_cast<Eigen::Index>(j)];
        }
        for (std::size_t j = 0; j < free_disturbances.size(); ++j) {
            in.d[free_disturbances[j].first][static_cast<Eigen::Index>(free_disturbances[j].second)] =
                d[static_cast<Eigen::Index>(j)];
        }
        std::vector<Vec> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (reads_output[i]) y[i] = subsystems[i].output(in.x[i]);
        }

        std::vector<double> values(slots.size(), 0.0);
        for (std::size_t k = 0; k < slots.size(); ++k) {
            const auto& sl = slots[k];
            if (sl.kind == Slot::Kind::Constant) {
                values[k] = sl.value;
            } else if (sl.kind == Slot::Kind::Signal) {
                const auto i = static_cast<Eigen::Index>(sl.signal.index);
                switch (sl.signal.source) {
                    case Source::State: values[k] = in.x[sl.signal.subsystem][i]; break;
                    case Source::Control: values[k] = in.u[sl.signal.subsystem][i]; break;
                    case Source::Disturbance: values[k] = in.d[sl.signal.subsystem][i]; break;
                    case Source::Output: values[k] = y[sl.signal.subsystem][i]; break;
                }
            }
        }
        in.coupling.resize(static_cast<Eigen::Index>(terms.size()));
        for (std::size_t t = 0; t < terms.size(); ++t) {
            const double v = bound[t].evaluate(values);
            values[receiver_slot[t]] = v;
            in.coupling[static_cast<Eigen::Index>(t)] = v;
            const auto& tg = targets[t];
            (tg.control ? in.u : in.d)[tg.subsystem][static_cast<Eigen::Index>(tg.index)] = v;
        }
        return in;
    }

    Vec advance(const Vec& x, const Vec& u, const Vec& d, bool increment) const {
        const auto in = prepare(x, u, d);
        Vec out(x.size());
        for (std::size_t i = 0; i < subsystems.size(); ++i) {
            const auto& s = subsystems[i];
            out.segment(static_cast<Eigen::Index>(state_offset[i]), static_cast<Eigen::Index>(s.state_dim())) =
                increment ? s.increment(in.x[i], in.u[i], in.d[i]) : s.step(in.x[i], in.u[i], in.d[i]);
        }
        return out;
    }
};

CoupledSystem::CoupledSystem(std::shared_ptr<const Impl> impl, SubsystemModel model)
    : impl_(std::move(impl)), model_(std::move(model)) {}

const std::vector<SubsystemModel>& CoupledSystem::subsystems() const { return impl_->subsystems; }
const std::vector<CouplingTerm>& CoupledSystem::terms() const { return impl_->terms; }
const CouplingParams& CoupledSystem::params() const { return impl_->params; }
std::size_t CoupledSystem::state_offset(std::size_t subsystem) const { return impl_->state_offset.at(subsystem); }
std::vector<std::string> CoupledSystem::coupling_names() const { return impl_->coupling_names; }
std::vector<std::string> CoupledSystem::coupling_units() const { return impl_->coupling_units; }

Vec CoupledSystem::coupling_values(const Vec& x, const Vec& u, const Vec& d) const {
    model_.check_dims(x, u, d);
    return impl_->prepare(x, u, d).coupling;
}

Vec CoupledSystem::outputs(const Vec& x) const { return model_.output(x); }

CoupledSystem compose(std::vector<SubsystemModel> subsystems, std::vector<CouplingTerm> terms,
                      CouplingParams params) {
    using Impl = CoupledSystem::Impl;
    if (subsystems.empty()) throw ConfigError("compose needs at least one subsystem");
    params.validate();
    for (std::size_t i = 0; i < subsystems.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (subsystems[i].id() == subsystems[j].id()) throw ConfigError("duplicate subsystem id " + subsystems[i].id());
        }
        if (subsystems[i].dt() != subsystems[0].dt()) {
            throw ConfigError("subsystem " + subsystems[i].id() + " has dt " + std::to_string(subsystems[i].dt()) +
                              ", expected " + std::to_string(subsystems[0].dt()));
        }
    }
    auto report = validate(terms, subsystems);
    if (!report.ok()) throw CouplingRejected(std::move(report));

    auto impl = std::make_shared<Impl>();
    const auto order = topological_order(dependency_graph(terms));
    for (auto i : order) impl->terms.push_back(terms[i]);
    impl->subsystems = std::move(subsystems);
    impl->params = params;
    const auto& subs = impl->subsystems;

    // Names: bare unless two subsystems share one.
    std::map<std::string, std::set<std::size_t>> owners;
    for (std::size_t i = 0; i < subs.size(); ++i) {
        const auto& s = subs[i].signals();
        for (const auto* set : {&s.states, &s.controls, &s.disturbances, &s.outputs}) {
            for (const auto& sig : *set) owners[sig.name].insert(i);
        }
    }
    auto merged_name = [&](std::size_t sub, const std::string& name) {
        return owners[name].size() > 1 ? subs[sub].id() + "." + name : name;
    };

    std::vector<Signal> states, controls, disturbances, outputs;
    std::size_t offset = 0;
    for (std::size_t i = 0; i < subs.size(); ++i) {
        const auto& s = subs[i].signals();
        impl->state_offset.push_back(offset);
        offset += subs[i].state_dim();
        for (const auto& sig : s.states) states.push_back({merged_name(i, sig.name), SignalRole::State, sig.unit});
        for (const auto& sig : s.outputs) outputs.push_back({merged_name(i, sig.name), SignalRole::Output, sig.unit});
        for (std::size_t k = 0; k < s.controls.size(); ++k) {
            const SignalRef ref{subs[i].id(), s.controls[k].name};
            if (std::none_of(impl->terms.begin(), impl->terms.end(), [&](const auto& t) { return t.receiver == ref; })) {
                impl->free_controls.emplace_back(i, k);
                controls.push_back({merged_name(i, s.controls[k].name), SignalRole::Control, s.controls[k].unit});
            }
        }
        for (std::size_t k = 0; k < s.disturbances.size(); ++k) {
            const SignalRef ref{subs[i].id(), s.disturbances[k].name};
            if (std::none_of(impl->terms.begin(), impl->terms.end(), [&](const auto& t) { return t.receiver == ref; })) {
                impl->free_disturbances.emplace_back(i, k);
                disturbances.push_back(
                    {merged_name(i, s.disturbances[k].name), SignalRole::Disturbance, s.disturbances[k].unit});
            }
        }
    }

    impl->reads_output.assign(subs.size(), false);
    std::map<std::string, std::size_t> slot_of;
    for (std::size_t t = 0; t < impl->terms.size(); ++t) {
        const auto& recv = impl->terms[t].receiver;
        const auto r = resolve(subs, recv);
        impl->targets.push_back({r.subsystem, r.source == Source::Control, r.index});
        impl->receiver_slot.push_back(impl->slots.size());
        slot_of[recv.qualified()] = impl->slots.size();
        impl->slots.push_back({Impl::Slot::Kind::Receiver, {}, t, 0.0});
        impl->coupling_names.push_back(merged_name(r.subsystem, recv.signal));
        const auto& rs = subs[r.subsystem].signals();
        impl->coupling_units.push_back(r.source == Source::Control ? rs.controls[r.index].unit
                                                                    : rs.disturbances[r.index].unit);
    }
    auto slot_resolver = [&](const std::string& name, expr::SourceLocation) -> std::size_t {
        if (auto it = slot_of.find(name); it != slot_of.end()) return it->second;
        Impl::Slot sl{};
        if (is_qualified(name)) {
            sl.kind = Impl::Slot::Kind::Signal;
            sl.signal = resolve(subs, SignalRef::parse(name));
            if (sl.signal.source == Source::Output) impl->reads_output[sl.signal.subsystem] = true;
        } else {
            sl.kind = Impl::Slot::Kind::Constant;
            if (name == "COP") sl.value = params.cop;
            else if (name == "R_DC") sl.value = params.r_dc;
            else throw ConfigError("unknown constant '" + name + "'");
        }
        slot_of[name] = impl->slots.size();
        impl->slots.push_back(sl);
        return impl->slots.size() - 1;
    };
    const HFunction h = params.h;
    auto function_resolver = [h](const std::string& name, expr::SourceLocation where) -> expr::BoundExpression::FunctionSpec {
        if (name == "H") return {[h](std::span<const double> a) { return h(a[0]); }, 1};
        if (name == "to_kW") return {[](std::span<const double> a) { return a[0] / 1000.0; }, 1};
        throw expr::ParseError("unknown function '" + name + "'", where);
    };
    for (const auto& t : impl->terms) impl->bound.emplace_back(t.expression, slot_resolver, function_resolver);

    std::string id;
    for (const auto& s : subs) id += (id.empty() ? "" : "+") + s.id();
    ModelSignals merged;
    merged.states = SignalSet(SignalRole::State, std::move(states));
    merged.controls = SignalSet(SignalRole::Control, std::move(controls));
    merged.disturbances = SignalSet(SignalRole::Disturbance, std::move(disturbances));
    merged.outputs = SignalSet(SignalRole::Output, std::move(outputs));

    std::shared_ptr<const Impl> shared = impl;
    const double dt = shared->subsystems[0].dt();
    VectorField step = [shared](const Vec& x, const Vec& u, const Vec& d) { return shared->advance(x, u, d, false); };
    VectorField increment = [shared](const Vec& x, const Vec& u, const Vec& d) { return shared->advance(x, u, d, true); };
    OutputMap output;
    if (!merged.outputs.empty()) {
        output = [shared](const Vec& x) {
            Vec y;
            std::vector<Vec> parts;
            Eigen::Index n = 0;
            for (std::size_t i = 0; i < shared->subsystems.size(); ++i) {
                const auto& s = shared->subsystems[i];
                if (s.output_dim() == 0) continue;
                parts.push_back(s.output(x.segment(static_cast<Eigen::Index>(shared->state_offset[i]),
                                                   static_cast<Eigen::Index>(s.state_dim()))));
                n += parts.back().size();
            }
            y.resize(n);
            Eigen::Index at = 0;
            for (const auto& p : parts) {
                y.segment(at, p.size()) = p;
                at += p.size();
            }
            return y;
        };
    }
    SubsystemModel model(id, std::move(merged), dt, std::move(step), std::move(output), std::move(increment));
    return CoupledSystem(shared, std::move(model));
}

StepResult coupled_step(const CoupledSystem& sys, const StateVector& x, const Vec& u, const Vec& d) {
    return eval_step(sys.model(), x, u, d);
}

}  // namespace gridcouple::coupling
