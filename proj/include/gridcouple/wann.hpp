#pragma once

#include <span>
#include <string>
#include <vector>

#include "gridcouple/model.hpp"

namespace gridcouple::wann {

/// One hidden neuron of the waterfall network.
///
/// "affine":            w * sigma_1 + b
/// "waterfall-sigmoid": w * sigma_3 / (1 + exp(-slope * sigma_2 + offset))
///
/// Arguments beyond those used are accepted and ignored, exactly as declared by `arity`.
class Activation {
public:
    static Activation affine(double weight, double bias, std::size_t arity);
    static Activation waterfall_sigmoid(double weight, double slope = 0.5, double offset = 10.0);

    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] std::size_t arity() const { return arity_; }
    [[nodiscard]] double weight() const { return weight_; }
    [[nodiscard]] double bias() const { return bias_; }
    [[nodiscard]] double slope() const { return slope_; }
    [[nodiscard]] double offset() const { return offset_; }

    /// Throws UsageError when sigma.size() != arity().
    [[nodiscard]] double operator()(std::span<const double> sigma) const;

private:
    std::string name_;
    std::size_t arity_ = 0;
    double weight_ = 0.0;
    double bias_ = 0.0;
    double slope_ = 0.0;
    double offset_ = 0.0;
};

/// The published five-parameter trio.
struct ReferenceWeights {
    double w12 = 1.0;
    double w21 = -9.7182e-6;
    double w32 = -1.1106e-6;
    double b1 = 2.2213e-4;
    double b2 = 2.7766e-5;
};

struct WannParams {
    /// activations[n - 1] is Phi_n; the network order N is activations.size().
    std::vector<Activation> activations;
    double dt = 0.001;

    /// Phi_1 = affine(w12, b1), Phi_2 = waterfall-sigmoid(w21), Phi_3 = affine(w32, b2).
    static WannParams reference(const ReferenceWeights& w = {}, double dt = 0.001);

    [[nodiscard]] std::size_t order() const { return activations.size(); }
    /// Phi_1 must take (y, u); every later neuron takes (y_older, y_newer, u).
    void validate() const;
};

/// y_{k-1}..y_{k-N} (degC) and u_{k-1}..u_{k-N} (kW), most recent first.
struct DelayHistory {
    std::vector<double> past_outputs;
    std::vector<double> past_inputs;
};

struct WannState {
    Vec x;
    [[nodiscard]] double output() const { return x[0]; }
};

/// Phi_n(sigma), n counted from 1.
[[nodiscard]] double activation(const WannParams& p, std::size_t n, std::span<const double> sigma);

/// Direct input-output evaluation of the network: y_k from the delay history.
[[nodiscard]] double narma_eval(const WannParams& p, const DelayHistory& h);

/// Pushes (y_k, u_k) to the front of the history and drops the oldest entry.
[[nodiscard]] DelayHistory shift_history(const DelayHistory& h, double y_k, double u_k);

/// N-state realization with y = x_1, id "dc", control u_DC, output y_DC.
[[nodiscard]] SubsystemModel realize_state_space(const WannParams& p);

/// State at time k-1 whose next output (under input u_{k-1}) equals narma_eval(h),
/// and whose later outputs keep matching the input-output model.
[[nodiscard]] WannState init_from_history(const WannParams& p, const DelayHistory& h);

}  // namespace gridcouple::wann
