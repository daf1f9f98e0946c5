#pragma once

#include <stdexcept>
#include <string>

namespace gridcouple {

/// Invalid parameters, scenario content, or model configuration.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A call that violates an operation's preconditions (dimension mismatch, arity, range).
class UsageError : public std::invalid_argument {
public:
    explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

/// A numerical procedure failed (non-convergent inner solve, failed factorization).
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, double residual = 0.0)
        : std::runtime_error(what), residual_(residual) {}

    [[nodiscard]] double residual() const { return residual_; }

private:
    double residual_;
};

}  // namespace gridcouple
