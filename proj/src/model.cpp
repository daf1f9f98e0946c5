#include "gridcouple/model.hpp"

#include <cmath>
#include <unordered_set>

#include "gridcouple/errors.hpp"

namespace gridcouple {
namespace {

void check_role(const SignalSet& set, SignalRole expected, const char* what) {
    if (!set.empty() && set.role() != expected) {
        throw ConfigError(std::string(what) + " list carries role " + std::string(to_string(set.role())));
    }
}

void check_vec(const Vec& v, std::size_t n, const std::string& model, const char* what) {
    if (static_cast<std::size_t>(v.size()) != n) {
        throw UsageError(model + ": " + what + " has dimension " + std::to_string(v.size()) + ", expected " +
                         std::to_string(n));
    }
}

}  // namespace

void validate_signals(const ModelSignals& s) {
    check_role(s.states, SignalRole::State, "state");
    check_role(s.controls, SignalRole::Control, "control");
    check_role(s.disturbances, SignalRole::Disturbance, "disturbance");
    check_role(s.outputs, SignalRole::Output, "output");
    // Coupling expressions refer to signals by bare name, so names must be unique across roles too.
    std::unordered_set<std::string> seen;
    for (const SignalSet* set : {&s.states, &s.controls, &s.disturbances, &s.outputs}) {
        for (const auto& sig : *set) {
            if (!seen.insert(sig.name).second) throw ConfigError("signal name '" + sig.name + "' used twice");
        }
    }
}

ContinuousModel::ContinuousModel(std::string id, ModelSignals signals, VectorField derivative, OutputMap output)
    : id_(std::move(id)), signals_(std::move(signals)), derivative_(std::move(derivative)), output_(std::move(output)) {
    validate_signals(signals_);
    if (!derivative_) throw ConfigError(id_ + ": missing derivative function");
}

Vec ContinuousModel::derivative(const Vec& x, const Vec& u, const Vec& d) const {
    check_vec(x, signals_.states.size(), id_, "state");
    check_vec(u, signals_.controls.size(), id_, "control");
    check_vec(d, signals_.disturbances.size(), id_, "disturbance");
    Vec dx = derivative_(x, u, d);
    if (dx.size() != x.size()) throw NumericalError(id_ + ": derivative changed state dimension");
    return dx;
}

SubsystemModel::SubsystemModel(std::string id, ModelSignals signals, double dt, VectorField step, OutputMap output,
                               VectorField increment)
    : id_(std::move(id)),
      signals_(std::move(signals)),
      dt_(dt),
      step_(std::move(step)),
      output_(std::move(output)),
      increment_(std::move(increment)) {
    validate_signals(signals_);
    if (!(dt_ > 0.0) || !std::isfinite(dt_)) throw ConfigError(id_ + ": timestep must be positive, got " + std::to_string(dt_));
    if (!step_) throw ConfigError(id_ + ": missing step function");
    if (!signals_.outputs.empty() && !output_) throw ConfigError(id_ + ": outputs declared without an output map");
}

Vec SubsystemModel::increment(const Vec& x, const Vec& u, const Vec& d) const {
    if (increment_) return increment_(x, u, d);
    return step_(x, u, d) - x;
}

Vec SubsystemModel::output(const Vec& x) const {
    if (!output_) return Vec(0);
    return output_(x);
}

void SubsystemModel::check_dims(const Vec& x, const Vec& u, const Vec& d) const {
    check_vec(x, signals_.states.size(), id_, "state");
    check_vec(u, signals_.controls.size(), id_, "control");
    check_vec(d, signals_.disturbances.size(), id_, "disturbance");
}

Eigen::Index first_non_finite(const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) return i;
    }
    return -1;
}

SubsystemModel discretize_euler(const ContinuousModel& model, double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw ConfigError(model.id() + ": Euler timestep must be positive, got " + std::to_string(dt));
    }
    const VectorField f = model.derivative_fn();
    auto step = [f, dt](const Vec& x, const Vec& u, const Vec& d) -> Vec { return x + dt * f(x, u, d); };
    auto increment = [f, dt](const Vec& x, const Vec& u, const Vec& d) -> Vec { return dt * f(x, u, d); };
    return {model.id(), model.signals(), dt, step, model.output_fn(), increment};
}

StepResult eval_step(const SubsystemModel& model, const StateVector& x, const Vec& u, const Vec& d) {
    if (x.signals().names() != model.signals().states.names()) {
        throw UsageError(model.id() + ": state vector does not match the model's state signals");
    }
    model.check_dims(x.values(), u, d);
    Vec next = model.step(x.values(), u, d);
    if (static_cast<std::size_t>(next.size()) != model.state_dim()) {
        throw NumericalError(model.id() + ": step changed state dimension");
    }
    if (const auto bad = first_non_finite(next); bad >= 0) {
        return Divergence{model.signals().states[static_cast<std::size_t>(bad)].name, static_cast<std::size_t>(bad),
                          next[bad]};
    }
    return StateVector(model.signals().states, std::move(next));
}

}  // namespace gridcouple
