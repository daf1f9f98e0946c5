#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gridcouple/expression.hpp"
#include "gridcouple/model.hpp"

namespace gridcouple::coupling {

/// `subsystem.signal`
struct SignalRef {
    std::string subsystem;
    std::string signal;

    /// Throws ConfigError unless `qualified` has exactly one '.' separating two identifiers.
    static SignalRef parse(std::string_view qualified);
    [[nodiscard]] std::string qualified() const { return subsystem + "." + signal; }
    bool operator==(const SignalRef&) const = default;
};

/// receiver := expression
///
/// Bare identifiers in the expression name coupling constants (COP, R_DC); dotted
/// identifiers name signals. Registered functions: H(T) and to_kW(P), the W -> kW
/// unit adapter.
struct CouplingTerm {
    SignalRef receiver;
    expr::Expression expression;

    /// `receiver` is the left side, `expression` the right side. `where` locates the
    /// right side in its source file so parse errors point at the right column.
    static CouplingTerm parse(std::string_view receiver, std::string_view expression,
                              expr::SourceLocation where = {});
    /// "a.b = expression" on one line.
    static CouplingTerm parse_line(std::string_view line, expr::SourceLocation where = {});

    /// Signal references (dotted identifiers) in first-appearance order.
    [[nodiscard]] std::vector<SignalRef> signal_refs() const;
    [[nodiscard]] std::string to_string() const { return receiver.qualified() + " = " + expression.text(); }
};

/// Inverse impedance of the auxiliary loads as a function of rack temperature.
///
/// Linear family: H(T) = h0 * (1 + gamma * (T - t_ref)).
/// Table family: breakpoints with linear interpolation and linear end extrapolation.
class HFunction {
public:
    static HFunction linear(double h0, double t_ref, double gamma);
    static HFunction table(std::vector<double> temperature, std::vector<double> value);

    [[nodiscard]] double operator()(double t_rack) const;
    [[nodiscard]] bool is_linear() const { return temperature_.empty(); }
    [[nodiscard]] double h0() const { return h0_; }
    [[nodiscard]] double t_ref() const { return t_ref_; }
    [[nodiscard]] double gamma() const { return gamma_; }
    /// Linear family only; throws ConfigError for tables.
    [[nodiscard]] HFunction with_gamma(double gamma) const;

    void validate(const std::string& path) const;

private:
    double h0_ = 0.0;
    double t_ref_ = 0.0;
    double gamma_ = 0.0;
    std::vector<double> temperature_;
    std::vector<double> value_;
};

struct CouplingParams {
    double cop = 3.5;
    double r_dc = 3.7;  // ohm
    HFunction h = HFunction::linear(0.01, 20.0, 0.005);

    /// Field paths are reported as `<prefix>.COP` and so on.
    void validate(const std::string& prefix = "coupling") const;
};

[[nodiscard]] double eval_H(const CouplingParams& p, double t_rack);

struct Violation {
    int guideline = 0;
    std::string message;
    std::vector<std::size_t> terms;  // indices into the validated term list
    std::vector<std::string> cycle;  // guideline 4: receivers, first repeated at the end
};

struct ValidationReport {
    std::vector<Violation> violations;

    [[nodiscard]] bool ok() const { return violations.empty(); }
    [[nodiscard]] bool cites(int guideline) const;
    [[nodiscard]] std::string to_string() const;
};

/// Compose was given terms that break the coupling guidelines.
class CouplingRejected : public ConfigError {
public:
    explicit CouplingRejected(ValidationReport report);
    [[nodiscard]] const ValidationReport& report() const { return report_; }

private:
    ValidationReport report_;
};

/// Checks the four guidelines:
///   1. a term involves at most two subsystems (receiver side included);
///   2. the receiver is a control or disturbance input;
///   3. no input is a receiver twice;
///   4. no receiver depends on itself through other receivers.
/// Unknown subsystems, signals, constants or functions throw ConfigError.
[[nodiscard]] ValidationReport validate(std::span<const CouplingTerm> terms,
                                        std::span<const SubsystemModel> subsystems);

/// The composed discrete-time system x_k = F(x_{k-1}, u_{k-1}, d_{k-1}).
///
/// x stacks the subsystem states in the given order; u and d are the subsystem
/// inputs left after removing every receiver. Merged signal names are the bare
/// names, qualified as `id.name` only where two subsystems share a name.
class CoupledSystem {
public:
    [[nodiscard]] const SubsystemModel& model() const { return model_; }
    [[nodiscard]] const std::vector<SubsystemModel>& subsystems() const;
    /// Terms in substitution (topological) order.
    [[nodiscard]] const std::vector<CouplingTerm>& terms() const;
    [[nodiscard]] const CouplingParams& params() const;

    [[nodiscard]] std::size_t state_offset(std::size_t subsystem) const;
    /// Names of the reconstructed coupling signals, in terms() order.
    [[nodiscard]] std::vector<std::string> coupling_names() const;
    [[nodiscard]] std::vector<std::string> coupling_units() const;
    /// Values of the receivers at (x, u, d), in terms() order.
    [[nodiscard]] Vec coupling_values(const Vec& x, const Vec& u, const Vec& d) const;
    /// Stacked subsystem outputs at x.
    [[nodiscard]] Vec outputs(const Vec& x) const;

    struct Impl;

private:
    friend CoupledSystem compose(std::vector<SubsystemModel>, std::vector<CouplingTerm>, CouplingParams);
    CoupledSystem(std::shared_ptr<const Impl> impl, SubsystemModel model);

    std::shared_ptr<const Impl> impl_;
    SubsystemModel model_;
};

/// Throws CouplingRejected when validate() reports violations, ConfigError when the
/// subsystems disagree on dt or params are invalid.
[[nodiscard]] CoupledSystem compose(std::vector<SubsystemModel> subsystems, std::vector<CouplingTerm> terms,
                                    CouplingParams params);

/// One synchronous step: every coupling expression is evaluated at the k-1 values,
/// then each subsystem advances with its substituted inputs.
[[nodiscard]] StepResult coupled_step(const CoupledSystem& sys, const StateVector& x, const Vec& u, const Vec& d);

}  // namespace gridcouple::coupling
