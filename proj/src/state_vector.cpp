#include "gridcouple/state_vector.hpp"

#include <cmath>

#include "gridcouple/errors.hpp"

namespace gridcouple {

StateVector::StateVector(std::shared_ptr<const SignalSet> signals, Eigen::VectorXd values)
    : signals_(std::move(signals)), values_(std::move(values)) {
    if (!signals_) throw UsageError("StateVector without signal index");
    if (static_cast<std::size_t>(values_.size()) != signals_->size()) {
        throw UsageError("StateVector has " + std::to_string(values_.size()) + " values for " +
                         std::to_string(signals_->size()) + " signals");
    }
    for (Eigen::Index i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            throw ConfigError("non-finite value for state '" + (*signals_)[static_cast<std::size_t>(i)].name + "'");
        }
    }
}

StateVector::StateVector(const SignalSet& signals, Eigen::VectorXd values)
    : StateVector(std::make_shared<const SignalSet>(signals), std::move(values)) {}

double StateVector::operator[](std::string_view name) const {
    return values_[static_cast<Eigen::Index>(signals_->index_of(name))];
}

StateVector StateVector::with(std::string_view name, double value) const {
    Eigen::VectorXd v = values_;
    v[static_cast<Eigen::Index>(signals_->index_of(name))] = value;
    return {signals_, std::move(v)};
}

}  // namespace gridcouple
