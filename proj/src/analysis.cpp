#include "gridcouple/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace gridcouple::analysis {
namespace {

bool all_finite(const Vec& v) { return first_non_finite(v) < 0; }

// F(x) - x, or NaN when an inner solve fails.
Vec try_increment(const SubsystemModel& F, const Vec& x, const Vec& u, const Vec& d) {
    try {
        return F.increment(x, u, d);
    } catch (const NumericalError&) {
        return Vec::Constant(x.size(), std::numeric_limits<double>::quiet_NaN());
    }
}

double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

// Columns of d(F(x) - x)/dx and dF/du.
LinearizedSystem increment_jacobian(const SubsystemModel& F, const Vec& x, const Vec& u, const Vec& d,
                                    double epsilon) {
    F.check_dims(x, u, d);
    const auto n = x.size();
    const auto m = u.size();
    LinearizedSystem lin{Mat(n, n), Mat(n, m)};

    auto probe = [&](const Vec& xp, const Vec& up, const std::string& what) {
        Vec g;
        try {
            g = F.increment(xp, up, d);
        } catch (const NumericalError& e) {
            throw NumericalError("jacobian probe of " + what + " failed: " + e.what(), e.residual());
        }
        if (const auto bad = first_non_finite(g); bad >= 0) {
            throw NumericalError("jacobian probe of " + what + " diverged in " +
                                 F.signals().states[static_cast<std::size_t>(bad)].name);
        }
        return g;
    };

    for (Eigen::Index i = 0; i < n; ++i) {
        const double h = epsilon * std::max(1.0, std::abs(x[i]));
        Vec xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const auto& name = F.signals().states[static_cast<std::size_t>(i)].name;
        lin.A.col(i) = (probe(xp, u, "column " + name) - probe(xm, u, "column " + name)) / (xp[i] - xm[i]);
    }
    for (Eigen::Index j = 0; j < m; ++j) {
        const double h = epsilon * std::max(1.0, std::abs(u[j]));
        Vec up = u, um = u;
        up[j] += h;
        um[j] -= h;
        const auto& name = F.signals().controls[static_cast<std::size_t>(j)].name;
        lin.B.col(j) = (probe(x, up, "input " + name) - probe(x, um, "input " + name)) / (up[j] - um[j]);
    }
    return lin;
}

struct NewtonOutcome {
    Vec x;
    double residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    std::string message;
    std::optional<Vec> null_direction;
};

NewtonOutcome damped_newton(const SubsystemModel& F, const Vec& x0, const Vec& u, const Vec& d,
                            const EquilibriumOptions& opt) {
    NewtonOutcome out;
    Vec x = x0;
    Vec g = try_increment(F, x, u, d);
    if (!all_finite(g)) {
        out.x = x0;
        out.message = "initial guess is not evaluable";
        return out;
    }
    out.x = x;
    out.residual = inf_norm(g);
    for (int it = 0; it <= opt.max_iterations; ++it) {
        out.iterations = it;
        const double r = inf_norm(g);
        if (r < out.residual || it == 0) {
            out.x = x;
            out.residual = r;
        }
        if (r < opt.tolerance) {
            out.converged = true;
            out.message = "converged";
            return out;
        }
        if (it == opt.max_iterations) break;

        Mat J;
        try {
            J = increment_jacobian(F, x, u, d, opt.jacobian.epsilon).A;
        } catch (const NumericalError& e) {
            out.message = e.what();
            return out;
        }
        Eigen::FullPivLU<Mat> lu(J);
        if (!lu.isInvertible()) {
            Eigen::JacobiSVD<Mat> svd(J, Eigen::ComputeFullV);
            out.null_direction = svd.matrixV().col(svd.matrixV().cols() - 1);
            out.message = "F' - I is singular (rank " + std::to_string(lu.rank()) + " of " +
                          std::to_string(J.rows()) + ")";
            return out;
        }
        const Vec dx = lu.solve(-g);
        const double g2 = g.norm();
        double t = 1.0;
        bool accepted = false;
        Vec xn, gn;
        for (int h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
            xn = x + t * dx;
            gn = try_increment(F, xn, u, d);
            if (all_finite(gn) && gn.norm() < (1.0 - 1e-4 * t) * g2) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            out.message = "line search failed after " + std::to_string(opt.max_halvings) + " halvings";
            return out;
        }
        x = std::move(xn);
        g = std::move(gn);
    }
    out.message = "no convergence in " + std::to_string(opt.max_iterations) + " iterations";
    return out;
}

Vec preroll(const SubsystemModel& F, const Vec& x0, const Vec& u, const Vec& d, std::size_t steps) {
    Vec x = x0;
    for (std::size_t k = 0; k < steps; ++k) {
        Vec xn = try_increment(F, x, u, d);
        if (!all_finite(xn)) break;
        xn += x;
        x = std::move(xn);
    }
    return x;
}

bool eigen_less(const std::complex<double>& a, const std::complex<double>& b) {
    const double ma = std::abs(a), mb = std::abs(b);
    if (ma != mb) return ma > mb;
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
}

}  // namespace

LinearizedSystem jacobian_fd(const SubsystemModel& F, const Vec& x, const Vec& u, const Vec& d,
                             const JacobianOptions& options) {
    auto lin = increment_jacobian(F, x, u, d, options.epsilon);
    lin.A += Mat::Identity(x.size(), x.size());
    return lin;
}

LinearizedSystem jacobian_richardson(const SubsystemModel& F, const Vec& x, const Vec& u, const Vec& d,
                                     const JacobianOptions& options) {
    const auto coarse = increment_jacobian(F, x, u, d, options.epsilon);
    const auto fine = increment_jacobian(F, x, u, d, options.epsilon / 2.0);
    LinearizedSystem lin{(4.0 * fine.A - coarse.A) / 3.0, (4.0 * fine.B - coarse.B) / 3.0};
    lin.A += Mat::Identity(x.size(), x.size());
    return lin;
}

EquilibriumResult find_equilibrium(const SubsystemModel& F, const Vec& x0, const Vec& u_bar, const Vec& d_bar,
                                   const EquilibriumOptions& options) {
    F.check_dims(x0, u_bar, d_bar);
    if (!all_finite(x0)) throw UsageError("initial guess must be finite");

    EquilibriumResult res;
    res.u_bar = u_bar;
    res.d_bar = d_bar;

    auto take = [&res](const NewtonOutcome& o, int iterations_before) {
        res.x_bar = o.x;
        res.residual_norm = o.residual;
        res.iterations = iterations_before + o.iterations;
        res.converged = o.converged;
        res.message = o.message;
        res.null_direction = o.null_direction;
    };

    const auto first = damped_newton(F, x0, u_bar, d_bar, options);
    take(first, 0);
    if (first.converged || options.preroll_steps == 0) return res;

    const Vec warm = preroll(F, x0, u_bar, d_bar, options.preroll_steps);
    const auto second = damped_newton(F, warm, u_bar, d_bar, options);
    if (second.converged || second.residual < first.residual) {
        take(second, first.iterations);
        res.prerolled = true;
    }
    return res;
}

EquilibriumResult find_equilibrium(const SubsystemModel& F, std::span<const Vec> seeds, const Vec& u_bar,
                                   const Vec& d_bar, const EquilibriumOptions& options) {
    if (seeds.empty()) throw UsageError("find_equilibrium needs at least one seed");
    std::optional<EquilibriumResult> best;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        auto r = find_equilibrium(F, seeds[i], u_bar, d_bar, options);
        r.seed_index = i;
        if (r.converged) return r;
        if (!best || r.residual_norm < best->residual_norm) best = std::move(r);
    }
    return *best;
}

std::string_view to_string(Stability s) {
    switch (s) {
        case Stability::Stable: return "stable";
        case Stability::Marginal: return "marginal";
        case Stability::Unstable: return "unstable";
    }
    return "unknown";
}

StabilityReport stability_local(const Mat& A, double tol_margin) {
    if (A.rows() != A.cols()) throw UsageError("stability_local needs a square matrix");
    StabilityReport rep;
    if (A.rows() == 0) return rep;
    Eigen::EigenSolver<Mat> es(A, false);
    if (es.info() != Eigen::Success) throw NumericalError("eigenvalue decomposition failed");
    std::vector<std::complex<double>> ev(es.eigenvalues().data(), es.eigenvalues().data() + A.rows());
    std::sort(ev.begin(), ev.end(), eigen_less);
    rep.eigenvalues = Eigen::Map<const CVec>(ev.data(), static_cast<Eigen::Index>(ev.size()));
    rep.spectral_radius = std::abs(ev.front());
    rep.n_outside = static_cast<std::size_t>(
        std::count_if(ev.begin(), ev.end(), [&](const auto& l) { return std::abs(l) > 1.0 + tol_margin; }));
    if (rep.n_outside > 0) rep.classification = Stability::Unstable;
    else if (rep.spectral_radius < 1.0 - tol_margin) rep.classification = Stability::Stable;
    else rep.classification = Stability::Marginal;
    return rep;
}

StabilityReport stability_local(const SubsystemModel& F, const EquilibriumResult& eq, double tol_margin,
                                const JacobianOptions& options) {
    if (!eq.converged) throw UsageError("stability_local needs a converged equilibrium");
    return stability_local(jacobian_fd(F, eq.x_bar, eq.u_bar, eq.d_bar, options).A, tol_margin);
}

LyapunovResult lyapunov_quadratic(const Mat& A) {
    if (A.rows() != A.cols()) throw UsageError("lyapunov_quadratic needs a square matrix");
    const Eigen::Index n = A.rows();
    const Eigen::Index n2 = n * n;
    // vec(A^T P A) = (A^T kron A^T) vec(P), column-major vec.
    Mat K(n2, n2);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            K.block(i * n, j * n, n, n) = A(j, i) * A.transpose();
        }
    }
    K -= Mat::Identity(n2, n2);
    const Vec rhs = -Eigen::Map<const Vec>(Mat::Identity(n, n).eval().data(), n2);

    LyapunovResult res;
    Eigen::FullPivLU<Mat> lu(K);
    if (!lu.isInvertible()) {
        res.marginal = true;
        res.message = "Lyapunov operator is singular (eigenvalue pair with product 1)";
        return res;
    }
    Vec p = lu.solve(rhs);
    res.P = Eigen::Map<const Mat>(p.data(), n, n);
    res.P = 0.5 * (res.P + res.P.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Mat> es(res.P, Eigen::EigenvaluesOnly);
    res.min_eigenvalue = n > 0 ? es.eigenvalues()[0] : 0.0;
    Eigen::LLT<Mat> llt(res.P);
    res.certified = llt.info() == Eigen::Success && res.min_eigenvalue > 0.0;
    res.message = res.certified ? "P is positive definite" : "P is not positive definite";
    return res;
}

DecreaseCheck sampled_decrease(const SubsystemModel& F, const Vec& x_bar, const Vec& u_bar, const Vec& d_bar,
                               const Mat& P, double radius, std::size_t samples, std::uint64_t seed) {
    F.check_dims(x_bar, u_bar, d_bar);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    DecreaseCheck chk;
    chk.radius = radius;
    chk.samples = samples;
    chk.worst = -std::numeric_limits<double>::infinity();
    const auto n = x_bar.size();
    // Remove the solver residual so x_bar is an exact fixed point of the checked map.
    const Vec g0 = F.increment(x_bar, u_bar, d_bar);
    Vec z(n);
    for (std::size_t k = 0; k < samples; ++k) {
        for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(rng);
        const Vec delta = radius * z / std::sqrt(z.dot(P * z));
        const Vec s = try_increment(F, x_bar + delta, u_bar, d_bar) - g0;
        const double dv = s.dot(P * (2.0 * delta + s));
        if (!std::isfinite(dv) || dv >= 0.0) ++chk.failures;
        if (!std::isfinite(dv)) chk.worst = std::numeric_limits<double>::infinity();
        else chk.worst = std::max(chk.worst, dv);
    }
    return chk;
}

DecreaseCheck verified_radius(const SubsystemModel& F, const Vec& x_bar, const Vec& u_bar, const Vec& d_bar,
                              const Mat& P, double r0, std::size_t samples, std::uint64_t seed, int halvings) {
    DecreaseCheck last;
    double r = r0;
    for (int i = 0; i <= halvings; ++i, r *= 0.5) {
        last = sampled_decrease(F, x_bar, u_bar, d_bar, P, r, samples, seed);
        if (last.failures == 0) return last;
    }
    last.radius = 0.0;
    return last;
}

ControllabilityReport controllability_rank(const LinearizedSystem& lin, double absolute_floor) {
    const Eigen::Index n = lin.A.rows();
    const Eigen::Index m = lin.B.cols();
    if (lin.A.cols() != n || lin.B.rows() != n) throw UsageError("A and B dimensions disagree");
    ControllabilityReport rep;
    rep.state_dim = static_cast<std::size_t>(n);
    rep.matrix.resize(n, n * m);
    if (n == 0 || m == 0) {
        rep.singular_values = Vec(0);
        return rep;
    }
    Mat block = lin.B;
    for (Eigen::Index k = 0; k < n; ++k) {
        rep.matrix.middleCols(k * m, m) = block;
        block = lin.A * block;
    }
    Eigen::BDCSVD<Mat> svd(rep.matrix);
    rep.singular_values = svd.singularValues();
    const double smax = rep.singular_values.size() ? rep.singular_values[0] : 0.0;
    rep.threshold = std::max(smax * static_cast<double>(n) * std::numeric_limits<double>::epsilon(), absolute_floor);
    rep.rank = static_cast<std::size_t>((rep.singular_values.array() > rep.threshold).count());
    return rep;
}

CVec pair_eigenvalues(const CVec& prev, const CVec& next) {
    if (prev.size() != next.size()) return next;
    const Eigen::Index n = prev.size();
    struct Pair {
        double dist;
        Eigen::Index i, j;
    };
    std::vector<Pair> pairs;
    pairs.reserve(static_cast<std::size_t>(n * n));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) pairs.push_back({std::abs(prev[i] - next[j]), i, j});
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.dist < b.dist; });
    std::vector<bool> used_i(static_cast<std::size_t>(n)), used_j(static_cast<std::size_t>(n));
    CVec out(n);
    for (const auto& p : pairs) {
        if (used_i[static_cast<std::size_t>(p.i)] || used_j[static_cast<std::size_t>(p.j)]) continue;
        used_i[static_cast<std::size_t>(p.i)] = used_j[static_cast<std::size_t>(p.j)] = true;
        out[p.i] = next[p.j];
    }
    return out;
}

std::vector<SweepRow> gamma_sweep(const std::function<coupling::CoupledSystem(double)>& build,
                                  std::span<const double> gammas, std::span<const Vec> seeds, const Vec& u_bar,
                                  const Vec& d_bar, const SweepOptions& options) {
    std::vector<SweepRow> rows(gammas.size());
    std::vector<std::size_t> order(gammas.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return gammas[a] < gammas[b]; });

    std::optional<Vec> warm;
    std::optional<CVec> prev_eigs;
    for (auto idx : order) {
        SweepRow& row = rows[idx];
        row.gamma = gammas[idx];
        try {
            const auto sys = build(row.gamma);
            const auto& F = sys.model();
            EquilibriumResult eq;
            bool have = false;
            if (warm) {
                auto quick = options.equilibrium;
                quick.preroll_steps = 0;
                eq = find_equilibrium(F, *warm, u_bar, d_bar, quick);
                have = eq.converged;
            }
            if (!have) {
                eq = find_equilibrium(F, seeds, u_bar, d_bar, options.equilibrium);
            }
            row.equilibrium = eq;
            row.converged = eq.converged;
            row.message = eq.message;
            if (!eq.converged) continue;
            const auto rep = stability_local(F, eq, options.tol_margin, options.equilibrium.jacobian);
            row.eigenvalues = prev_eigs ? pair_eigenvalues(*prev_eigs, rep.eigenvalues) : rep.eigenvalues;
            row.spectral_radius = rep.spectral_radius;
            row.n_outside = rep.n_outside;
            if (prev_eigs && prev_eigs->size() == row.eigenvalues.size()) {
                row.max_pair_jump = (row.eigenvalues - *prev_eigs).cwiseAbs().maxCoeff();
            }
            prev_eigs = row.eigenvalues;
            warm = eq.x_bar;
        } catch (const std::exception& e) {
            row.converged = false;
            row.message = e.what();
        }
    }
    return rows;
}

Trajectory simulate(const SubsystemModel& F, const Vec& x0, const InputSequence& inputs,
                    const SimulationOptions& options, const Probe& probe) {
    if (inputs.u.empty() || inputs.d.empty()) throw UsageError("input sequence is empty");
    if (options.stride == 0) throw UsageError("stride must be at least 1");
    for (const auto& u : inputs.u) F.check_dims(x0, u, inputs.d.front());
    for (const auto& d : inputs.d) F.check_dims(x0, inputs.u.front(), d);

    Trajectory tr;
    tr.columns = F.signals().states.names();
    tr.columns.insert(tr.columns.end(), probe.names.begin(), probe.names.end());

    auto record = [&](std::size_t k, const Vec& x) {
        if (!options.record) return;
        Vec row(x.size() + static_cast<Eigen::Index>(probe.names.size()));
        row.head(x.size()) = x;
        if (probe.values) row.tail(static_cast<Eigen::Index>(probe.names.size())) = probe.values(x, inputs.u_at(k), inputs.d_at(k));
        tr.steps.push_back(k);
        tr.times.push_back(static_cast<double>(k) * F.dt());
        tr.rows.push_back(std::move(row));
    };

    Vec x = x0;
    record(0, x);
    if (options.observer) options.observer(0, x);
    for (std::size_t k = 0; k < options.steps; ++k) {
        Vec xn;
        try {
            xn = F.step(x, inputs.u_at(k), inputs.d_at(k));
        } catch (const NumericalError& e) {
            tr.diverged = true;
            tr.divergence_step = k + 1;
            tr.divergence_signal = e.what();
            break;
        }
        if (const auto bad = first_non_finite(xn); bad >= 0) {
            tr.diverged = true;
            tr.divergence_step = k + 1;
            tr.divergence_signal = F.signals().states[static_cast<std::size_t>(bad)].name;
            break;
        }
        x = std::move(xn);
        if (options.observer) options.observer(k + 1, x);
        if ((k + 1) % options.stride == 0 || k + 1 == options.steps) record(k + 1, x);
    }
    tr.final_state = x;
    return tr;
}

Trajectory simulate(const coupling::CoupledSystem& sys, const Vec& x0, const InputSequence& inputs,
                    const SimulationOptions& options) {
    Probe probe;
    probe.names = sys.model().signals().outputs.names();
    const auto couplings = sys.coupling_names();
    probe.names.insert(probe.names.end(), couplings.begin(), couplings.end());
    const auto ny = static_cast<Eigen::Index>(sys.model().output_dim());
    const auto nc = static_cast<Eigen::Index>(couplings.size());
    probe.values = [&sys, ny, nc](const Vec& x, const Vec& u, const Vec& d) {
        Vec v(ny + nc);
        if (ny) v.head(ny) = sys.outputs(x);
        if (nc) v.tail(nc) = sys.coupling_values(x, u, d);
        return v;
    };
    return simulate(sys.model(), x0, inputs, options, probe);
}

}  // namespace gridcouple::analysis
