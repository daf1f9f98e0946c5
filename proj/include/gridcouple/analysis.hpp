#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridcouple/coupling.hpp"
#include "gridcouple/model.hpp"

namespace gridcouple::analysis {

using CVec = Eigen::VectorXcd;

struct LinearizedSystem {
    Mat A;  // dF/dx
    Mat B;  // dF/du
};

struct JacobianOptions {
    double epsilon = 1e-6;  // relative step, scaled by max(1, |x_i|)
};

/// Central differences of F around (x, u, d). Differencing F(x) - x keeps the
/// near-identity part of A exact. Throws NumericalError naming the column on divergence.
[[nodiscard]] LinearizedSystem jacobian_fd(const SubsystemModel& F, const Vec& x, const Vec& u, const Vec& d,
                                           const JacobianOptions& options = {});

/// (4 J(eps/2) - J(eps)) / 3.
[[nodiscard]] LinearizedSystem jacobian_richardson(const SubsystemModel& F, const Vec& x, const Vec& u, const Vec& d,
                                                   const JacobianOptions& options = {});

struct EquilibriumOptions {
    double tolerance = 1e-9;     // on ||F(x) - x||_inf
    int max_iterations = 100;
    int max_halvings = 30;
    std::size_t preroll_steps = 20000;
    JacobianOptions jacobian;
};

struct EquilibriumResult {
    Vec x_bar;
    Vec u_bar;
    Vec d_bar;
    double residual_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    bool prerolled = false;
    std::size_t seed_index = 0;
    std::string message;
    /// Set when F' - I was numerically singular.
    std::optional<Vec> null_direction;
};

/// Damped Newton on G(x) = F(x, u, d) - x with halving line search. When Newton
/// from x0 fails, the system is simulated for `preroll_steps` and Newton restarts
/// from the end point. Non-convergence returns the best iterate, flagged.
[[nodiscard]] EquilibriumResult find_equilibrium(const SubsystemModel& F, const Vec& x0, const Vec& u_bar,
                                                 const Vec& d_bar, const EquilibriumOptions& options = {});

/// Tries each seed in order and returns the first converged result, or the best one.
[[nodiscard]] EquilibriumResult find_equilibrium(const SubsystemModel& F, std::span<const Vec> seeds,
                                                 const Vec& u_bar, const Vec& d_bar,
                                                 const EquilibriumOptions& options = {});

enum class Stability { Stable, Marginal, Unstable };

[[nodiscard]] std::string_view to_string(Stability s);

struct StabilityReport {
    CVec eigenvalues;  // sorted by decreasing magnitude
    double spectral_radius = 0.0;
    std::size_t n_outside = 0;
    Stability classification = Stability::Stable;
};

[[nodiscard]] StabilityReport stability_local(const Mat& A, double tol_margin = 1e-9);
[[nodiscard]] StabilityReport stability_local(const SubsystemModel& F, const EquilibriumResult& eq,
                                              double tol_margin = 1e-9, const JacobianOptions& options = {});

struct LyapunovResult {
    bool certified = false;
    bool marginal = false;  // the Lyapunov operator was singular
    Mat P;
    double min_eigenvalue = 0.0;
    std::string message;
};

/// Solves A^T P A - P = -I through the vectorized n^2 x n^2 system and checks P > 0.
[[nodiscard]] LyapunovResult lyapunov_quadratic(const Mat& A);

struct DecreaseCheck {
    double radius = 0.0;  // level sqrt(d^T P d) of the sampled perturbations
    std::size_t samples = 0;
    std::size_t failures = 0;
    double worst = 0.0;   // largest V(F(x)) - V(x) seen
};

/// V(x) = (x - x_bar)^T P (x - x_bar) sampled on the ellipsoid surface of the given radius.
/// The map checked is F(x) - (F(x_bar) - x_bar), whose fixed point is exactly x_bar.
/// Solver failures at a sample count as failures.
[[nodiscard]] DecreaseCheck sampled_decrease(const SubsystemModel& F, const Vec& x_bar, const Vec& u_bar,
                                             const Vec& d_bar, const Mat& P, double radius, std::size_t samples,
                                             std::uint64_t seed);

/// Largest radius in {r0, r0/2, r0/4, ...} (at most `halvings` tries) where every sample decreases; 0 if none.
[[nodiscard]] DecreaseCheck verified_radius(const SubsystemModel& F, const Vec& x_bar, const Vec& u_bar,
                                            const Vec& d_bar, const Mat& P, double r0, std::size_t samples,
                                            std::uint64_t seed, int halvings = 40);

struct ControllabilityReport {
    std::size_t rank = 0;
    std::size_t state_dim = 0;
    Vec singular_values;  // decreasing
    double threshold = 0.0;
    Mat matrix;           // [B AB ... A^{n-1}B]
};

/// Numerical rank with threshold max(sigma_max * n * eps, absolute_floor).
[[nodiscard]] ControllabilityReport controllability_rank(const LinearizedSystem& lin, double absolute_floor = 0.0);

struct SweepRow {
    double gamma = 0.0;
    bool converged = false;
    EquilibriumResult equilibrium;
    CVec eigenvalues;  // paired with the previous row in gamma order
    double spectral_radius = 0.0;
    std::size_t n_outside = 0;
    double max_pair_jump = 0.0;  // vs the previous converged row
    std::string message;
};

struct SweepOptions {
    EquilibriumOptions equilibrium;
    double tol_margin = 1e-9;
};

/// Re-composes the system per gamma (through `build`) and solves the equilibrium,
/// visiting gammas in ascending order with warm starts from the previous point and
/// the seeds as fallback. Rows come back in input order; failures are recorded.
[[nodiscard]] std::vector<SweepRow> gamma_sweep(const std::function<coupling::CoupledSystem(double)>& build,
                                                std::span<const double> gammas, std::span<const Vec> seeds,
                                                const Vec& u_bar, const Vec& d_bar,
                                                const SweepOptions& options = {});

/// Reorders `next` so entry i is the eigenvalue nearest prev[i] (greedy over all pairs by distance).
[[nodiscard]] CVec pair_eigenvalues(const CVec& prev, const CVec& next);

/// Input signals over time. Shorter sequences hold their last entry.
struct InputSequence {
    std::vector<Vec> u;
    std::vector<Vec> d;

    static InputSequence constant(const Vec& u, const Vec& d) { return {{u}, {d}}; }
    [[nodiscard]] const Vec& u_at(std::size_t k) const { return u[std::min(k, u.size() - 1)]; }
    [[nodiscard]] const Vec& d_at(std::size_t k) const { return d[std::min(k, d.size() - 1)]; }
};

struct SimulationOptions {
    std::size_t steps = 1;
    std::size_t stride = 1;  // record every stride-th step (the last step is always recorded)
    bool record = true;
    /// Called with every state, x_0 included.
    std::function<void(std::size_t step, const Vec& x)> observer;
};

struct Trajectory {
    std::vector<std::string> columns;  // states, then extras
    std::vector<std::size_t> steps;
    std::vector<double> times;
    std::vector<Vec> rows;
    bool diverged = false;
    std::size_t divergence_step = 0;
    std::string divergence_signal;  // first non-finite state, or the inner solver message
    Vec final_state;
};

/// Extra recorded signals: names and values at (x, u, d).
struct Probe {
    std::vector<std::string> names;
    std::function<Vec(const Vec& x, const Vec& u, const Vec& d)> values;
};

/// Iterates F. Divergence truncates the trajectory and sets the flag.
[[nodiscard]] Trajectory simulate(const SubsystemModel& F, const Vec& x0, const InputSequence& inputs,
                                  const SimulationOptions& options, const Probe& probe = {});

/// Records outputs and the reconstructed coupling values alongside the states.
[[nodiscard]] Trajectory simulate(const coupling::CoupledSystem& sys, const Vec& x0, const InputSequence& inputs,
                                  const SimulationOptions& options);

}  // namespace gridcouple::analysis
