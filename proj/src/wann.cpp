#include "gridcouple/wann.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "gridcouple/errors.hpp"

namespace gridcouple::wann {
namespace {

// exp overflows near 709 in double precision.
constexpr double kExpClamp = 700.0;

void check_history(const WannParams& p, const DelayHistory& h) {
    if (h.past_outputs.size() != p.order() || h.past_inputs.size() != p.order()) {
        throw UsageError("delay history must hold " + std::to_string(p.order()) + " outputs and inputs");
    }
    for (std::size_t i = 0; i < p.order(); ++i) {
        if (!std::isfinite(h.past_outputs[i]) || !std::isfinite(h.past_inputs[i])) {
            throw UsageError("delay history contains a non-finite entry");
        }
    }
}

// Phi_n for n >= 2 with the waterfall argument order (older output, newer output, input).
double cascade(const Activation& phi, double y_older, double y_newer, double u) {
    const std::array<double, 3> sigma{y_older, y_newer, u};
    return phi(sigma);
}

}  // namespace

Activation Activation::affine(double weight, double bias, std::size_t arity) {
    if (arity < 1) throw ConfigError("affine activation needs at least one argument");
    Activation a;
    a.name_ = "affine";
    a.arity_ = arity;
    a.weight_ = weight;
    a.bias_ = bias;
    return a;
}

Activation Activation::waterfall_sigmoid(double weight, double slope, double offset) {
    Activation a;
    a.name_ = "waterfall-sigmoid";
    a.arity_ = 3;
    a.weight_ = weight;
    a.slope_ = slope;
    a.offset_ = offset;
    return a;
}

double Activation::operator()(std::span<const double> sigma) const {
    if (sigma.size() != arity_) {
        throw UsageError(name_ + " activation takes " + std::to_string(arity_) + " arguments, got " +
                         std::to_string(sigma.size()));
    }
    if (name_ == "affine") return weight_ * sigma[0] + bias_;
    const double exponent = std::clamp(-slope_ * sigma[1] + offset_, -kExpClamp, kExpClamp);
    return weight_ * sigma[2] / (1.0 + std::exp(exponent));
}

WannParams WannParams::reference(const ReferenceWeights& w, double dt) {
    WannParams p;
    p.activations = {Activation::affine(w.w12, w.b1, 2), Activation::waterfall_sigmoid(w.w21),
                     Activation::affine(w.w32, w.b2, 3)};
    p.dt = dt;
    return p;
}

void WannParams::validate() const {
    if (activations.empty()) throw ConfigError("wann: at least one neuron is required");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("wann.dt must be positive");
    for (std::size_t n = 0; n < activations.size(); ++n) {
        const auto& a = activations[n];
        const std::size_t expected = n == 0 ? 2 : 3;
        if (a.arity() != expected) {
            throw ConfigError("wann.phi" + std::to_string(n + 1) + " must take " + std::to_string(expected) +
                              " arguments");
        }
        for (double v : {a.weight(), a.bias(), a.slope(), a.offset()}) {
            if (!std::isfinite(v)) throw ConfigError("wann.phi" + std::to_string(n + 1) + " has a non-finite parameter");
        }
    }
}

double activation(const WannParams& p, std::size_t n, std::span<const double> sigma) {
    if (n < 1 || n > p.order()) throw UsageError("activation index " + std::to_string(n) + " out of range");
    return p.activations[n - 1](sigma);
}

double narma_eval(const WannParams& p, const DelayHistory& h) {
    check_history(p, h);
    const auto& y = h.past_outputs;  // y[j] = y_{k-1-j}
    const auto& u = h.past_inputs;
    const std::array<double, 2> first{y[0], u[0]};
    double sum = p.activations[0](first);
    for (std::size_t n = 2; n <= p.order(); ++n) {
        sum += cascade(p.activations[n - 1], y[n - 1], y[n - 2], u[n - 1]);
    }
    return sum;
}

DelayHistory shift_history(const DelayHistory& h, double y_k, double u_k) {
    DelayHistory out = h;
    if (out.past_outputs.empty()) return out;
    std::rotate(out.past_outputs.rbegin(), out.past_outputs.rbegin() + 1, out.past_outputs.rend());
    std::rotate(out.past_inputs.rbegin(), out.past_inputs.rbegin() + 1, out.past_inputs.rend());
    out.past_outputs.front() = y_k;
    out.past_inputs.front() = u_k;
    return out;
}

SubsystemModel realize_state_space(const WannParams& p) {
    p.validate();
    const std::size_t n = p.order();
    ModelSignals s;
    std::vector<Signal> states;
    for (std::size_t i = 0; i < n; ++i) states.push_back({"x_DC" + std::to_string(i + 1), SignalRole::State, "degC"});
    s.states = SignalSet(SignalRole::State, std::move(states));
    s.controls = SignalSet::of(SignalRole::Control, {{"u_DC", "kW"}});
    s.outputs = SignalSet::of(SignalRole::Output, {{"y_DC", "degC"}});

    auto step = [p](const Vec& x, const Vec& u, const Vec& /*d*/) -> Vec {
        const auto n_states = static_cast<Eigen::Index>(p.order());
        const std::array<double, 2> first{x[0], u[0]};
        const double phi1 = p.activations[0](first);
        Vec next(n_states);
        if (n_states == 1) {
            next[0] = phi1;
            return next;
        }
        const double cascaded = x[1] + phi1;  // equals the next output
        next[0] = cascaded;
        for (Eigen::Index i = 1; i < n_states; ++i) {
            const double carry = i + 1 < n_states ? x[i + 1] : 0.0;
            next[i] = carry + cascade(p.activations[static_cast<std::size_t>(i)], x[0], cascaded, u[0]);
        }
        return next;
    };
    auto output = [](const Vec& x) -> Vec { return x.head(1); };
    return {"dc", std::move(s), p.dt, step, output};
}

WannState init_from_history(const WannParams& p, const DelayHistory& h) {
    p.validate();
    check_history(p, h);
    const std::size_t n = p.order();
    const auto& y = h.past_outputs;
    const auto& u = h.past_inputs;
    Vec x = Vec::Zero(static_cast<Eigen::Index>(n));
    x[0] = y[0];
    // x_j holds the not-yet-emitted contributions Phi_j..Phi_N already determined by the history.
    for (std::size_t j = 2; j <= n; ++j) {
        double acc = 0.0;
        for (std::size_t m = 0; m + j <= n; ++m) {
            acc += cascade(p.activations[j + m - 1], y[1 + m], y[m], u[1 + m]);
        }
        x[static_cast<Eigen::Index>(j - 1)] = acc;
    }
    return {x};
}

}  // namespace gridcouple::wann
