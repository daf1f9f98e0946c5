#pragma once

#include <memory>
#include <string_view>

#include <Eigen/Dense>

#include "gridcouple/signal.hpp"

namespace gridcouple {

/// Values of a model's state signals, indexed by signal name.
///
/// Construction rejects non-finite entries; the index is shared between copies.
class StateVector {
public:
    StateVector(std::shared_ptr<const SignalSet> signals, Eigen::VectorXd values);
    StateVector(const SignalSet& signals, Eigen::VectorXd values);

    [[nodiscard]] const Eigen::VectorXd& values() const { return values_; }
    [[nodiscard]] const SignalSet& signals() const { return *signals_; }
    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

    [[nodiscard]] double operator[](std::string_view name) const;
    /// Returns a copy with one entry replaced. Throws ConfigError if value is not finite.
    [[nodiscard]] StateVector with(std::string_view name, double value) const;

private:
    std::shared_ptr<const SignalSet> signals_;
    Eigen::VectorXd values_;
};

}  // namespace gridcouple
