#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>

#include "fixtures.hpp"
#include "gridcouple/errors.hpp"
#include "gridcouple/analysis.hpp"
#include "gridcouple/scenario.hpp"

using namespace gridcouple;
using namespace gridcouple::analysis;

namespace {

SubsystemModel linear_model(const Mat& A, const Mat& B, const Vec& offset = Vec()) {
    ModelSignals s;
    s.states = SignalSet::numbered(SignalRole::State, "x", static_cast<std::size_t>(A.rows()));
    s.controls = SignalSet::numbered(SignalRole::Control, "u", static_cast<std::size_t>(B.cols()));
    const Vec c = offset.size() ? offset : Vec::Zero(A.rows());
    return SubsystemModel("lin", s, 0.001, [A, B, c](const Vec& x, const Vec& u, const Vec&) {
        return Vec(A * x + B * u + c);
    });
}

Mat random_matrix(std::mt19937_64& rng, Eigen::Index n, double scale) {
    std::normal_distribution<double> N(0.0, 1.0);
    Mat A(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) A(i, j) = N(rng);
    const double rho = A.eigenvalues().cwiseAbs().maxCoeff();
    return A * (scale / rho);
}

// Rank from the PBH test: rank [A - lambda I, B] = n at every eigenvalue of A.
bool pbh_controllable(const Mat& A, const Mat& B) {
    const auto n = A.rows();
    const CVec lambdas = A.eigenvalues();
    for (Eigen::Index k = 0; k < n; ++k) {
        Eigen::MatrixXcd M(n, n + B.cols());
        M.leftCols(n) = A.cast<std::complex<double>>() - lambdas[k] * Eigen::MatrixXcd::Identity(n, n);
        M.rightCols(B.cols()) = B.cast<std::complex<double>>();
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(M);
        const auto& s = svd.singularValues();
        if (s[n - 1] <= 1e-9 * s[0]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("finite-difference Jacobians of affine maps are exact") {
    Mat A(2, 2), B(2, 1);
    A << 0.9, 0.2, -0.1, 0.7;
    B << 1.0, 3.0;
    const auto F = linear_model(A, B);
    Vec x(2), u(1);
    x << 1.0, -2.0;
    u << 0.5;
    const auto lin = jacobian_fd(F, x, u, Vec(0));
    CHECK((lin.A - A).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((lin.B - B).cwiseAbs().maxCoeff() < 1e-9);
    const auto rich = jacobian_richardson(F, x, u, Vec(0));
    CHECK((rich.A - A).cwiseAbs().maxCoeff() < 1e-9);

    const auto I = linear_model(Mat::Identity(3, 3), Mat::Zero(3, 1));
    CHECK((jacobian_fd(I, Vec::Ones(3), Vec::Zero(1), Vec(0)).A - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("Richardson agrees with central differences on a smooth nonlinear map") {
    ModelSignals s;
    s.states = SignalSet::numbered(SignalRole::State, "x", 2);
    const SubsystemModel F("nl", s, 0.001, [](const Vec& x, const Vec&, const Vec&) {
        Vec y(2);
        y << std::sin(x[0]) * x[1], std::exp(0.1 * x[0]) + x[1] * x[1];
        return y;
    });
    Vec x(2);
    x << 0.3, 2.0;
    Mat exact(2, 2);
    exact << std::cos(0.3) * 2.0, std::sin(0.3), 0.1 * std::exp(0.03), 4.0;
    CHECK((jacobian_fd(F, x, Vec(0), Vec(0)).A - exact).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((jacobian_richardson(F, x, Vec(0), Vec(0)).A - exact).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("equilibrium of a contraction") {
    const auto F = linear_model(0.5 * Mat::Identity(2, 2), Mat::Zero(2, 1));
    const auto eq = find_equilibrium(F, Vec::Constant(2, 7.0), Vec::Zero(1), Vec(0));
    REQUIRE(eq.converged);
    CHECK(eq.x_bar.cwiseAbs().maxCoeff() < 1e-12);

    Vec c(2);
    c << 1.0, -3.0;
    const auto G = linear_model(0.5 * Mat::Identity(2, 2), Mat::Zero(2, 1), c);
    const auto eq2 = find_equilibrium(G, Vec::Zero(2), Vec::Zero(1), Vec(0));
    CHECK(eq2.x_bar[0] == doctest::Approx(2.0));
    CHECK(eq2.x_bar[1] == doctest::Approx(-6.0));
    CHECK(eq2.residual_norm < 1e-9);
}

TEST_CASE("no equilibrium: the solver reports failure") {
    // x + 1 has no fixed point; its Jacobian of the residual is singular.
    const auto F = linear_model(Mat::Identity(1, 1), Mat::Zero(1, 1), Vec::Ones(1));
    EquilibriumOptions o;
    o.preroll_steps = 100;
    const auto eq = find_equilibrium(F, Vec::Zero(1), Vec::Zero(1), Vec(0), o);
    CHECK_FALSE(eq.converged);
    CHECK(eq.residual_norm >= 1.0 - 1e-12);
    CHECK_FALSE(eq.message.empty());
}

TEST_CASE("spectral classification") {
    auto r = stability_local(0.5 * Mat::Identity(3, 3));
    CHECK(r.classification == Stability::Stable);
    CHECK(r.spectral_radius == doctest::Approx(0.5));

    Mat A = Mat::Zero(2, 2);
    A(0, 0) = 1.000003;
    A(1, 1) = 0.5;
    r = stability_local(A);
    CHECK(r.classification == Stability::Unstable);
    CHECK(r.n_outside == 1);
    CHECK(std::abs(r.eigenvalues[0]) == doctest::Approx(1.000003));

    r = stability_local(Mat::Identity(2, 2));
    CHECK(r.classification == Stability::Marginal);

    Mat rot(2, 2);
    rot << 0.0, -1.2, 1.2, 0.0;
    r = stability_local(rot);
    CHECK(r.n_outside == 2);
}

TEST_CASE("discrete Lyapunov equation") {
    const auto ok = lyapunov_quadratic(0.5 * Mat::Identity(2, 2));
    REQUIRE(ok.certified);
    CHECK((ok.P - (4.0 / 3.0) * Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);

    Mat A(2, 2);
    A << 0.6, 0.3, -0.2, 0.4;
    const auto l = lyapunov_quadratic(A);
    REQUIRE(l.certified);
    const Mat res = A.transpose() * l.P * A - l.P + Mat::Identity(2, 2);
    CHECK(res.cwiseAbs().maxCoeff() < 1e-12);
    CHECK((l.P - l.P.transpose()).cwiseAbs().maxCoeff() == 0.0);

    CHECK_FALSE(lyapunov_quadratic(1.1 * Mat::Identity(2, 2)).certified);
    const auto marginal = lyapunov_quadratic(Mat::Identity(2, 2));
    CHECK_FALSE(marginal.certified);
    CHECK(marginal.marginal);
}

TEST_CASE("Lyapunov certificate exists exactly for stable matrices") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> radius(0.3, 1.7);
    for (int k = 0; k < 60; ++k) {
        const double rho = radius(rng);
        if (std::abs(rho - 1.0) < 0.02) continue;
        const Mat A = random_matrix(rng, 4, rho);
        const bool stable = stability_local(A).classification == Stability::Stable;
        CAPTURE(rho);
        CHECK(lyapunov_quadratic(A).certified == stable);
    }
}

TEST_CASE("sampled decrease on a stable linear map") {
    Mat A(2, 2);
    A << 0.6, 0.3, -0.2, 0.4;
    const auto F = linear_model(A, Mat::Zero(2, 1));
    const auto l = lyapunov_quadratic(A);
    const auto c = sampled_decrease(F, Vec::Zero(2), Vec::Zero(1), Vec(0), l.P, 1.0, 500, 7);
    CHECK(c.samples == 500);
    CHECK(c.failures == 0);
    CHECK(c.worst < 0.0);
    const auto v = verified_radius(F, Vec::Zero(2), Vec::Zero(1), Vec(0), l.P, 8.0, 200, 7);
    CHECK(v.radius == 8.0);

    // The wrong P fails somewhere on the sphere.
    Mat bad = Mat::Identity(2, 2);
    bad(0, 0) = 1e-4;
    Mat shear(2, 2);
    shear << 0.5, 5.0, 0.0, 0.5;
    const auto S = linear_model(shear, Mat::Zero(2, 1));
    CHECK(sampled_decrease(S, Vec::Zero(2), Vec::Zero(1), Vec(0), Mat::Identity(2, 2), 1.0, 500, 7).failures > 0);
}

TEST_CASE("controllability rank") {
    Mat A(2, 2), B(2, 1);
    A << 1.0, 0.001, 0.0, 1.0;
    B << 0.0, 0.001;
    auto r = controllability_rank({A, B});
    CHECK(r.rank == 2);
    CHECK(r.state_dim == 2);
    CHECK(r.matrix.cols() == 2);

    r = controllability_rank({A, Mat::Zero(2, 1)});
    CHECK(r.rank == 0);

    Mat D = Mat::Zero(3, 3);
    D.diagonal() << 0.5, 0.5, 0.7;
    Mat b(3, 1);
    b << 1.0, 1.0, 1.0;
    CHECK(controllability_rank({D, b}).rank == 2);  // repeated eigenvalue, single input
}

TEST_CASE("controllability rank matches PBH and is invariant under similarity") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> N(0.0, 1.0);
    for (int k = 0; k < 30; ++k) {
        const Eigen::Index n = 4;
        Mat A = random_matrix(rng, n, 0.9);
        Mat B(n, 1);
        for (Eigen::Index i = 0; i < n; ++i) B(i) = N(rng);
        if (k % 3 == 0) {
            // Make one mode unreachable: decoupled block with zero input.
            A.row(n - 1).setZero();
            A.col(n - 1).setZero();
            A(n - 1, n - 1) = 0.3;
            B(n - 1) = 0.0;
        }
        const auto r = controllability_rank({A, B});
        CHECK((r.rank == static_cast<std::size_t>(n)) == pbh_controllable(A, B));

        Mat T = Mat::Identity(n, n);
        for (Eigen::Index i = 0; i < n; ++i) T(i, (i + 1) % n) = 0.5;
        T.diagonal() *= 3.0;
        const Mat Ti = T.inverse();
        CHECK(controllability_rank({Ti * A * T, Ti * B}).rank == r.rank);
    }
}

TEST_CASE("eigenvalue pairing follows the nearest neighbour") {
    CVec prev(3), next(3);
    prev << std::complex<double>(0.9, 0.1), std::complex<double>(0.9, -0.1), 0.2;
    next << 0.21, std::complex<double>(0.91, -0.11), std::complex<double>(0.91, 0.11);
    const CVec p = pair_eigenvalues(prev, next);
    CHECK(std::abs(p[0] - std::complex<double>(0.91, 0.11)) < 1e-12);
    CHECK(std::abs(p[1] - std::complex<double>(0.91, -0.11)) < 1e-12);
    CHECK(std::abs(p[2] - 0.21) < 1e-12);
}

TEST_CASE("simulate records, strides and truncates") {
    const auto F = linear_model(0.5 * Mat::Identity(1, 1), Mat::Ones(1, 1));
    SimulationOptions o;
    o.steps = 10;
    o.stride = 3;
    const auto tr = simulate(F, Vec::Zero(1), InputSequence::constant(Vec::Ones(1), Vec(0)), o);
    CHECK(tr.steps == std::vector<std::size_t>{0, 3, 6, 9, 10});
    CHECK_FALSE(tr.diverged);
    CHECK(tr.final_state[0] == doctest::Approx(2.0 * (1.0 - std::pow(0.5, 10))));
    CHECK(tr.times.back() == doctest::Approx(0.01));

    const auto G = linear_model(1e100 * Mat::Identity(1, 1), Mat::Zero(1, 1));
    o.steps = 100;
    const auto blow = simulate(G, Vec::Ones(1), InputSequence::constant(Vec::Zero(1), Vec(0)), o);
    CHECK(blow.diverged);
    CHECK(blow.divergence_step == 4);
    CHECK(blow.divergence_signal == "x1");
    CHECK(std::isfinite(blow.final_state[0]));
}

TEST_CASE("coupled equilibrium is a fixed point of the simulation") {
    const auto s = cli::load_scenario(fixtures::scenario("case_a"));
    const auto b = cli::build_system(s);
    const auto eq = find_equilibrium(b.system.model(), b.seeds, b.u, b.d, s.equilibrium);
    REQUIRE(eq.converged);
    SimulationOptions o;
    o.steps = 10000;
    o.record = false;
    double drift = 0.0;
    o.observer = [&](std::size_t, const Vec& x) {
        drift = std::max(drift, ((x - eq.x_bar).array() / eq.x_bar.array().abs().max(1.0)).abs().maxCoeff());
    };
    const auto tr = simulate(b.system, eq.x_bar, InputSequence::constant(b.u, b.d), o);
    CHECK_FALSE(tr.diverged);
    CHECK(drift < 1e-6);
}
