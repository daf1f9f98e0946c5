#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "fixtures.hpp"
#include "gridcouple/errors.hpp"
#include "gridcouple/analysis.hpp"
#include "gridcouple/log.hpp"
#include "gridcouple/microgrid.hpp"

using namespace gridcouple;
namespace mg = gridcouple::microgrid;

namespace {

// Plain bisection on the single-diode equation, 300 halvings over a wide bracket.
double pv_bisection(const mg::PvParams& p, double v, double t, double g) {
    const auto& d = p.diode;
    const double vt = d.ideality * d.series_cells * 1.380649e-23 * (t + 273.15) / 1.602176634e-19;
    const double iph = (d.i_sc_ref * (d.r_shunt + d.r_series) / d.r_shunt + d.k_i * (t - d.t_ref_c)) * g / d.g_ref;
    const double i0 = (d.i_sc_ref + d.k_i * (t - d.t_ref_c)) / (std::exp((d.v_oc_ref + d.k_v * (t - d.t_ref_c)) / vt) - 1.0);
    auto f = [&](double i) {
        const double vd = v + d.r_series * i;
        return iph - i0 * (std::exp(vd / vt) - 1.0) - vd / d.r_shunt - i;
    };
    double lo = -1e4, hi = 1e4;
    for (int k = 0; k < 300; ++k) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// The twelve circuit equations written out term by term.
Vec oracle_derivative(const mg::MicrogridParams& p, const Vec& x, const Vec& u, const Vec& dist) {
    const double soc = x[0], q2 = x[1], il_sd = x[2], v_bat = x[3], vc2_sd = x[4], t_pv = x[5];
    const double il_su = x[6], v_pv = x[7], vc2_su = x[8], il1 = x[9], il2 = x[10], v_bus = x[11];
    const double d_sd = u[0], d_su = u[1], d_load = u[2];
    const double g = dist[0], t_inf = dist[1], i_o = dist[2], i_loss = dist[3];

    const auto& b = p.battery;
    const double i_bat = b.cells_parallel / b.r1 * (b.voc(soc) + q2 / b.c2 - v_bat / b.modules_series);
    const double i_pv = pv_bisection(p.pv, v_pv, t_pv, g);

    Vec f(12);
    f[0] = -i_bat / (b.cells_parallel * b.capacity_ah * 3600.0);
    f[1] = -i_bat / b.cells_parallel - q2 / (b.r2 * b.c2);
    f[2] = (d_sd * v_bat - p.buck.r3 * il_sd - vc2_sd) / p.buck.l;
    f[3] = (i_bat - d_sd * il_sd - v_bat / p.buck.r1) / p.buck.c1;
    f[4] = (il_sd - il2 - vc2_sd / p.buck.r2) / p.buck.c2;
    f[5] = (p.pv.absorptivity * p.pv.area * g - p.pv.h_conv * p.pv.area * (t_pv - t_inf) - v_pv * i_pv) / p.pv.c_thermal;
    f[6] = (v_pv - p.boost.r3 * il_su - d_su * vc2_su) / p.boost.l;
    f[7] = (p.pv.panels_parallel * i_pv - il_su - v_pv / p.boost.r1) / p.boost.c1;
    f[8] = (d_su * il_su - il1 - vc2_su / p.boost.r2) / p.boost.c2;
    f[9] = (vc2_su - v_bus - p.bus.r1 * il1) / p.bus.l1;
    f[10] = (vc2_sd - v_bus - p.bus.r2 * il2) / p.bus.l2;
    f[11] = (il1 + il2 - i_loss - d_load * i_o) / p.bus.c;
    return f;
}

Vec random_state(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    Vec x(12);
    x << 0.5 + 0.4 * U(rng), 50 * U(rng), 20 * U(rng), 300 + 50 * U(rng), 160 + 20 * U(rng), 40 + 20 * U(rng),
        100 + 50 * U(rng), 25 + 8 * U(rng), 160 + 20 * U(rng), 20 + 10 * U(rng), 5 * U(rng), 160 + 20 * U(rng);
    return x;
}

}  // namespace

TEST_CASE("default open-circuit curve") {
    const auto v = mg::VocCurve::default_curve();
    CHECK(v(0.0) == doctest::Approx(3.0));
    CHECK(v(1.0) == doctest::Approx(4.2));
    CHECK(v.monotone_on_unit_interval());
    CHECK(v.slope(0.5) == doctest::Approx(2.4 - 4.8 * 0.5 + 3.6 * 0.25));
}

TEST_CASE("table open-circuit curve interpolates and extrapolates linearly") {
    const auto v = mg::VocCurve::table({0.0, 0.5, 1.0}, {3.0, 3.7, 4.1});
    CHECK(v(0.25) == doctest::Approx(3.35));
    CHECK(v(1.5) == doctest::Approx(4.1 + 0.5 * 0.8));
    CHECK(v(-0.5) == doctest::Approx(3.0 - 0.5 * 1.4));
    CHECK_THROWS_AS(mg::VocCurve::table({0.0, 0.0}, {3.0, 3.1}), ConfigError);

    const auto path = std::filesystem::temp_directory_path() / "gridcouple_voc_table.txt";
    {
        std::ofstream out(path);
        out << "# soc volts\n0 3.0\n0.5 3.7 # knee\n1 4.1\n";
    }
    const auto loaded = mg::VocCurve::load_table(path.string());
    CHECK(loaded(0.25) == doctest::Approx(3.35));
    std::filesystem::remove(path);

    mg::MicrogridParams p;
    p.battery.voc = mg::VocCurve::table({0.0, 0.5, 1.0}, {3.0, 4.0, 3.5});
    CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("microgrid.battery.voc"), ConfigError);
}

TEST_CASE("parameter validation names the field") {
    mg::MicrogridParams p;
    p.bus.c = -1.0;
    CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("microgrid.bus.C"), ConfigError);
    p = {};
    p.pv.absorptivity = 1.5;
    CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("microgrid.pv.alpha"), ConfigError);
    p = {};
    p.pv.diode.r_shunt = 0.0;
    CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("microgrid.pv.diode.R_p"), ConfigError);
}

TEST_CASE("PV current matches a bisection solve") {
    const mg::PvParams p;
    for (double v : {-5.0, 0.0, 10.0, 25.0, 26.5, 30.0, 34.0, 40.0}) {
        for (double t : {0.0, 25.0, 60.0}) {
            for (double g : {0.0, 200.0, 1000.0}) {
                const double expected = pv_bisection(p, v, t, g);
                CHECK(mg::pv_current(p, v, t, g) == doctest::Approx(expected).epsilon(1e-9).scale(1.0));
            }
        }
    }
}

TEST_CASE("PV current at short circuit and open circuit") {
    const mg::PvParams p;
    CHECK(mg::pv_current(p, 0.0, 25.0, 1000.0) == doctest::Approx(5.0).epsilon(1e-6));
    CHECK(std::abs(mg::pv_current(p, 32.5, 25.0, 1000.0)) < 0.2);
    CHECK(mg::pv_current(p, 10.0, 25.0, 1000.0) > mg::pv_current(p, 20.0, 25.0, 1000.0));
    CHECK_THROWS_AS((void)mg::pv_current(p, 10.0, 25.0, -1.0), UsageError);
}

TEST_CASE("microgrid vector field matches an independent transcription") {
    const mg::MicrogridParams p;
    const auto model = mg::build_microgrid(p);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec x = random_state(rng);
        Vec u(3), d(4);
        u << U(rng), U(rng), U(rng);
        d << 1000 * U(rng), 10 + 20 * U(rng), 40 * U(rng), 2 * U(rng);
        const Vec got = model.derivative(x, u, d);
        const Vec want = oracle_derivative(p, x, u, d);
        for (Eigen::Index i = 0; i < 12; ++i) {
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-9).scale(1e-9));
        }
    }
}

TEST_CASE("battery capacity in amp-hours when the coulomb flag is off") {
    mg::MicrogridParams p;
    p.battery.capacity_in_coulombs = false;
    const auto model = mg::build_microgrid(p);
    Vec x = Vec::Zero(12);
    x[0] = 0.5;
    x[3] = 200.0;
    Vec u(3), d(4);
    u << 0.5, 0.15, 1.0;
    d << 1000, 25, 0, 0;
    const double i_bat = mg::battery_current(p.battery, 0.5, 0.0, 200.0);
    CHECK(model.derivative(x, u, d)[0] == doctest::Approx(-i_bat / (400.0 * 1.21)));
}

TEST_CASE("block functions reject duty cycles outside [0, 1]") {
    const mg::ConverterParams c;
    CHECK_THROWS_AS((void)mg::buck_derivatives(c, 0, 100, 50, 1.2, 0, 0), UsageError);
    CHECK_THROWS_AS((void)mg::boost_derivatives(c, mg::PvParams{}, 0, 20, 50, -0.1, 1000, 25, 0), UsageError);
    CHECK_THROWS_AS((void)mg::bus_derivatives(mg::BusParams{}, 0, 0, 100, 100, 100, 2.0, 1, 0), UsageError);
    CHECK_NOTHROW((void)mg::buck_derivatives(c, 0, 100, 50, 1.0, 0, 0));
}

TEST_CASE("the model clamps duty cycles beyond the tolerance with a warning") {
    std::vector<std::string> seen;
    auto previous = set_warning_sink([&seen](const std::string& m) { seen.push_back(m); });
    const auto model = mg::build_microgrid({});
    Vec x = Vec::Zero(12);
    x[0] = 0.5;
    x[3] = 300;
    x[7] = 25;
    Vec u_over(3), u_one(3), d(4);
    u_over << 0.5, 0.15, 1.5;
    u_one << 0.5, 0.15, 1.0;
    d << 1000, 25, 10, 0;
    const Vec a = model.derivative(x, u_over, d);
    const Vec b = model.derivative(x, u_one, d);
    CHECK(a == b);
    CHECK(seen.size() == 1);
    seen.clear();
    u_over[2] = 1.0005;  // inside the tolerance: passed through
    CHECK(model.derivative(x, u_over, d)[11] != b[11]);
    CHECK(seen.empty());
    set_warning_sink(std::move(previous));
}

TEST_CASE("sanity: resting battery and cold dark panel do not move") {
    const mg::MicrogridParams p;
    const auto model = mg::build_microgrid(p);
    Vec x = Vec::Zero(12);
    x[0] = 0.4;
    x[3] = p.battery.modules_series * p.battery.voc(0.4);
    x[5] = 25.0;
    Vec u(3), d(4);
    u << 0.0, 0.0, 0.0;
    d << 0.0, 25.0, 0.0, 0.0;
    const Vec f = model.derivative(x, u, d);
    CHECK(f[0] == doctest::Approx(0.0));
    CHECK(f[1] == doctest::Approx(0.0));
    CHECK(f[5] == doctest::Approx(0.0));  // no irradiance, no convection, no electrical power
    CHECK(f[11] == 0.0);                  // no current into the bus capacitor
    // Only the buck input capacitor leaks through R1.
    CHECK(f[3] == doctest::Approx(-x[3] / p.buck.r1 / p.buck.c1));
}

TEST_CASE("sanity: bus charge balance") {
    const mg::MicrogridParams p;
    const auto model = mg::build_microgrid(p);
    Vec x = Vec::Zero(12);
    x[0] = 0.5;
    x[9] = 12.0;
    x[10] = 8.0;
    Vec u(3), d(4);
    u << 0.5, 0.15, 0.5;
    d << 1000, 25, 30.0, 5.0;
    // C dV/dt = I_L1 + I_L2 - I_loss - D_load I_O = 12 + 8 - 5 - 15 = 0
    CHECK(model.derivative(x, u, d)[11] == doctest::Approx(0.0));
}

TEST_CASE("Jacobian sparsity follows the circuit topology") {
    const auto F = fixtures::microgrid_model();
    Vec x(12);
    x << 0.5, 1.0, 2.0, 300, 160, 40, 100, 25, 160, 20, 1, 160;
    Vec u(3), d(4);
    u << 0.5, 0.15, 1.0;
    d << 1000, 25, 20.5, 0.0165;
    const auto lin = analysis::jacobian_fd(F, x, u, d);
    const Mat J = lin.A - Mat::Identity(12, 12);
    using namespace mg::idx;
    // The battery does not see the PV side or the bus.
    for (auto j : {T_PV, I_L_SU, V_PV, V_C2_SU, I_L1_BUS, V_BUS}) {
        CHECK(J(SOC, j) == 0.0);
        CHECK(J(Q2_BAT, j) == 0.0);
    }
    // V_bus only integrates the two bus inductor currents.
    for (Eigen::Index j = 0; j < 12; ++j) {
        if (j != I_L1_BUS && j != I_L2_BUS) CHECK(J(V_BUS, j) == 0.0);
    }
    CHECK(J(V_BUS, I_L1_BUS) != 0.0);
    // D_su only enters the boost converter.
    for (Eigen::Index i = 0; i < 12; ++i) {
        if (i != I_L_SU && i != V_C2_SU) CHECK(lin.B(i, D_SU) == 0.0);
    }
}
