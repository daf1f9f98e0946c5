#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "gridcouple/signal.hpp"
#include "gridcouple/state_vector.hpp"

namespace gridcouple {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// f(x, u, d) for continuous models, F(x, u, d) for discrete ones.
using VectorField = std::function<Vec(const Vec& x, const Vec& u, const Vec& d)>;
using OutputMap = std::function<Vec(const Vec& x)>;

struct ModelSignals {
    SignalSet states{SignalRole::State, {}};
    SignalSet controls{SignalRole::Control, {}};
    SignalSet disturbances{SignalRole::Disturbance, {}};
    SignalSet outputs{SignalRole::Output, {}};
};

/// Checks role consistency and name uniqueness across the four lists.
void validate_signals(const ModelSignals& signals);

/// x' = f(x, u, d)
class ContinuousModel {
public:
    ContinuousModel(std::string id, ModelSignals signals, VectorField derivative, OutputMap output = {});

    [[nodiscard]] const std::string& id() const { return id_; }
    [[nodiscard]] const ModelSignals& signals() const { return signals_; }
    [[nodiscard]] std::size_t state_dim() const { return signals_.states.size(); }

    /// Dimension-checked evaluation of f.
    [[nodiscard]] Vec derivative(const Vec& x, const Vec& u, const Vec& d) const;
    [[nodiscard]] const VectorField& derivative_fn() const { return derivative_; }
    [[nodiscard]] const OutputMap& output_fn() const { return output_; }

private:
    std::string id_;
    ModelSignals signals_;
    VectorField derivative_;
    OutputMap output_;
};

/// x_k = F(x_{k-1}, u_{k-1}, d_{k-1}), y_k = h(x_k).
///
/// Immutable after construction. `increment` optionally supplies F(x,u,d) - x
/// computed without cancellation (for Euler models this is exactly dt * f).
class SubsystemModel {
public:
    SubsystemModel(std::string id, ModelSignals signals, double dt, VectorField step, OutputMap output = {},
                   VectorField increment = {});

    [[nodiscard]] const std::string& id() const { return id_; }
    [[nodiscard]] const ModelSignals& signals() const { return signals_; }
    [[nodiscard]] double dt() const { return dt_; }
    [[nodiscard]] std::size_t state_dim() const { return signals_.states.size(); }
    [[nodiscard]] std::size_t control_dim() const { return signals_.controls.size(); }
    [[nodiscard]] std::size_t disturbance_dim() const { return signals_.disturbances.size(); }
    [[nodiscard]] std::size_t output_dim() const { return signals_.outputs.size(); }

    /// Unchecked F(x, u, d); callers in hot loops validate dimensions once.
    [[nodiscard]] Vec step(const Vec& x, const Vec& u, const Vec& d) const { return step_(x, u, d); }
    /// F(x, u, d) - x.
    [[nodiscard]] Vec increment(const Vec& x, const Vec& u, const Vec& d) const;
    [[nodiscard]] Vec output(const Vec& x) const;

    /// Throws UsageError unless x, u, d match the declared signal counts.
    void check_dims(const Vec& x, const Vec& u, const Vec& d) const;

private:
    std::string id_;
    ModelSignals signals_;
    double dt_;
    VectorField step_;
    OutputMap output_;
    VectorField increment_;
};

/// A step that produced NaN or Inf.
struct Divergence {
    std::string signal;
    std::size_t index = 0;
    double value = 0.0;
};

using StepResult = std::variant<StateVector, Divergence>;

[[nodiscard]] inline bool diverged(const StepResult& r) { return std::holds_alternative<Divergence>(r); }

/// Index of the first non-finite entry, or -1.
[[nodiscard]] Eigen::Index first_non_finite(const Vec& v);

/// Forward Euler: F(x, u, d) = x + dt * f(x, u, d).
[[nodiscard]] SubsystemModel discretize_euler(const ContinuousModel& model, double dt);

/// One dimension-checked step. Non-finite results are reported, not thrown.
[[nodiscard]] StepResult eval_step(const SubsystemModel& model, const StateVector& x, const Vec& u, const Vec& d);

}  // namespace gridcouple
