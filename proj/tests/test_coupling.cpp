#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "gridcouple/errors.hpp"
#include "gridcouple/coupling.hpp"

using namespace gridcouple;
using namespace gridcouple::coupling;
namespace mgi = gridcouple::microgrid::idx;

namespace {

SubsystemModel aux_model() {
    ModelSignals s;
    s.states = SignalSet::of(SignalRole::State, {{"z", ""}});
    s.controls = SignalSet::of(SignalRole::Control, {{"v", ""}});
    return SubsystemModel("aux", s, 0.001, [](const Vec& x, const Vec& u, const Vec&) { return Vec(x + 0.001 * u); });
}

std::vector<SubsystemModel> pair() { return {fixtures::microgrid_model(), fixtures::wann_model()}; }

ValidationReport check(const std::vector<std::string>& lines, std::vector<SubsystemModel> subs = pair()) {
    std::vector<CouplingTerm> terms;
    for (const auto& l : lines) terms.push_back(CouplingTerm::parse_line(l));
    return validate(terms, subs);
}

Vec operating_state() {
    Vec x = Vec::Zero(15);
    x[mgi::SOC] = 0.1876;
    x[mgi::V_BAT] = 232.5424;
    x[mgi::V_C2_SD] = 161.7716;
    x[mgi::T_PV] = 25.0;
    x[mgi::V_PV] = 25.754;
    x[mgi::V_C2_SU] = 161.7716;
    x[mgi::V_BUS] = 161.7716;
    x[mgi::I_L_SD] = 3.0;
    x[mgi::I_L1_BUS] = 40.0;
    x[mgi::I_L2_BUS] = 2.0;
    x[12] = 23.1065;
    x[13] = 0.01;
    x[14] = -0.02;
    return x;
}

Vec controls(double d_sd = 0.5, double d_su = 0.15, double d_load = 1.0) {
    Vec u(3);
    u << d_sd, d_su, d_load;
    return u;
}

Vec weather(double g = 1000.0, double t_inf = 25.0) {
    Vec d(2);
    d << g, t_inf;
    return d;
}

}  // namespace

TEST_CASE("reference couplings satisfy every guideline") {
    const auto r = check({"dc.u_DC = to_kW(COP * mg.D_load * mg.V_bus * mg.I_O)", "mg.I_O = mg.V_bus / R_DC",
                          "mg.I_loss = mg.V_bus * H(dc.x_DC1)"});
    CHECK_MESSAGE(r.ok(), r.to_string());
}

TEST_CASE("guideline 1: three models in one term") {
    auto subs = pair();
    subs.push_back(aux_model());
    const auto r = check({"aux.v = mg.V_bus * dc.x_DC1"}, subs);
    CHECK(r.cites(1));
    CHECK_FALSE(r.cites(2));
    CHECK(r.to_string().find("aux, mg, dc") != std::string::npos);
    CHECK(check({"aux.v = mg.V_bus"}, subs).ok());
}

TEST_CASE("guideline 2: receiver must be an input") {
    const auto r = check({"mg.V_bus = dc.x_DC1"});
    CHECK(r.cites(2));
    CHECK(check({"dc.x_DC1 = 1"}).cites(2));
    CHECK(check({"mg.I_bat = 1"}).cites(2));
}

TEST_CASE("guideline 3: one term per receiver") {
    const auto r = check({"mg.I_O = mg.V_bus / R_DC", "mg.I_O = 2 * mg.V_bus / R_DC"});
    REQUIRE(r.cites(3));
    CHECK(r.violations[0].terms == std::vector<std::size_t>{0, 1});
}

TEST_CASE("guideline 4: algebraic loops are traced") {
    const auto r = check({"dc.u_DC = to_kW(COP * mg.V_bus * mg.I_O)", "mg.I_O = dc.u_DC / R_DC"});
    REQUIRE(r.cites(4));
    const auto& v = *std::find_if(r.violations.begin(), r.violations.end(), [](auto& x) { return x.guideline == 4; });
    REQUIRE(v.cycle.size() == 3);
    CHECK(v.cycle.front() == v.cycle.back());
    CHECK(std::count(v.cycle.begin(), v.cycle.end(), "dc.u_DC") >= 1);
    CHECK(std::count(v.cycle.begin(), v.cycle.end(), "mg.I_O") >= 1);
    const bool traced = v.message.find("dc.u_DC -> mg.I_O") != std::string::npos ||
                        v.message.find("mg.I_O -> dc.u_DC") != std::string::npos;
    CHECK(traced);

    CHECK(check({"mg.I_O = mg.I_O + 1"}).cites(4));

    std::vector<CouplingTerm> terms{CouplingTerm::parse_line("dc.u_DC = mg.I_O"),
                                    CouplingTerm::parse_line("mg.I_O = dc.u_DC")};
    CHECK_THROWS_AS((void)compose(pair(), terms, {}), CouplingRejected);
}

TEST_CASE("unknown names are configuration errors") {
    CHECK_THROWS_AS((void)check({"mg.I_O = mg.V_nope"}), ConfigError);
    CHECK_THROWS_AS((void)check({"xx.I_O = 1"}), ConfigError);
    CHECK_THROWS_AS((void)check({"mg.I_O = mg.V_bus / R_XX"}), ConfigError);
    CHECK_THROWS_AS((void)check({"mg.I_O = sqrt(mg.V_bus)"}), ConfigError);
    CHECK_THROWS_AS((void)CouplingTerm::parse_line("mg.I_O mg.V_bus"), ConfigError);
    CHECK_THROWS_AS((void)CouplingTerm::parse_line("I_O = 1"), ConfigError);
}

TEST_CASE("composition exposes the merged signals") {
    const auto sys = fixtures::reference_system();
    const auto& m = sys.model();
    CHECK(m.state_dim() == 15);
    CHECK(m.signals().controls.names() == std::vector<std::string>{"D_sd", "D_su", "D_load"});
    CHECK(m.signals().disturbances.names() == std::vector<std::string>{"G", "T_inf"});
    CHECK(m.signals().outputs.names() == std::vector<std::string>{"I_bat", "y_DC"});
    CHECK(m.signals().states[12].name == "x_DC1");
    CHECK(sys.state_offset(1) == 12);
    CHECK(sys.coupling_names() == std::vector<std::string>{"I_O", "u_DC", "I_loss"});
    CHECK(sys.terms()[0].receiver.qualified() == "mg.I_O");

    Vec x = operating_state();
    x[mgi::V_BUS] = 0.0;
    const Vec c = sys.coupling_values(x, controls(), weather());
    CHECK(c.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("coupled step equals hand substitution into the two models") {
    const auto sys = fixtures::reference_system();
    const auto mg = fixtures::microgrid_model();
    const auto dc = fixtures::wann_model();
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    for (int trial = 0; trial < 20; ++trial) {
        Vec x = operating_state();
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] *= 1.0 + jitter(rng);
        const Vec u = controls(0.5 + jitter(rng), 0.15 + jitter(rng), 0.9 + jitter(rng));
        const Vec d = weather(900.0 + 1000.0 * jitter(rng), 25.0 + 10.0 * jitter(rng));

        const double v_bus = x[mgi::V_BUS];
        const double i_o = v_bus / 3.7;
        const double u_dc = 3.5 * u[2] * v_bus * i_o / 1000.0;
        const double h = 0.01 * (1.0 + 0.005 * (x[12] - 20.0));
        const double i_loss = v_bus * h;

        Vec d_mg(4);
        d_mg << d[0], d[1], i_o, i_loss;
        Vec u_dc_vec(1);
        u_dc_vec << u_dc;
        Vec expected(15);
        expected << mg.step(x.head(12), u, d_mg), dc.step(x.tail(3), u_dc_vec, Vec(0));

        const Vec got = sys.model().step(x, u, d);
        CHECK((got - expected).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + expected.cwiseAbs().maxCoeff()));

        const Vec c = sys.coupling_values(x, u, d);
        CHECK(c[0] == doctest::Approx(i_o).epsilon(1e-14));
        CHECK(c[1] == doctest::Approx(u_dc).epsilon(1e-14));
        CHECK(c[2] == doctest::Approx(i_loss).epsilon(1e-14));
        // Electrical power drawn by the IT load equals the cooling input scaled by COP.
        CHECK(c[1] * 1000.0 / 3.5 == doctest::Approx(u[2] * v_bus * v_bus / 3.7).epsilon(1e-12));
    }
}

TEST_CASE("increment is the step minus the state") {
    const auto sys = fixtures::reference_system();
    const Vec x = operating_state();
    const Vec a = sys.model().increment(x, controls(), weather());
    const Vec b = sys.model().step(x, controls(), weather()) - x;
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("no terms: composition is two independent models") {
    const auto sys = compose(pair(), {}, {});
    CHECK(sys.model().signals().controls.size() == 4);
    CHECK(sys.model().signals().disturbances.size() == 4);
    const auto mg = fixtures::microgrid_model();
    const auto dc = fixtures::wann_model();
    const Vec x = operating_state();
    Vec u(4), d(4);
    u << 0.5, 0.15, 1.0, 31.0;
    d << 1000.0, 25.0, 20.5, 0.0165;
    Vec u_dc(1);
    u_dc << 31.0;
    Vec expected(15);
    expected << mg.step(x.head(12), u.head(3), d), dc.step(x.tail(3), u_dc, Vec(0));
    CHECK(sys.model().step(x, u, d) == expected);
}

TEST_CASE("evaluation is repeatable and independent of term order") {
    auto terms = fixtures::reference_terms();
    std::reverse(terms.begin(), terms.end());
    const auto a = fixtures::reference_system();
    const auto b = compose(pair(), terms, fixtures::params_with_gamma(0.005));
    const Vec x = operating_state();
    const Vec s1 = a.model().step(x, controls(), weather());
    CHECK(a.model().step(x, controls(), weather()) == s1);
    CHECK(b.model().step(x, controls(), weather()) == s1);
}

TEST_CASE("H function families") {
    const auto lin = HFunction::linear(0.01, 20.0, 0.005);
    CHECK(lin(20.0) == doctest::Approx(0.01));
    CHECK(lin(30.0) == doctest::Approx(0.01 * 1.05));
    CHECK(lin.with_gamma(-0.5)(22.0) == doctest::Approx(0.0));
    CHECK(lin.with_gamma(0.0)(100.0) == doctest::Approx(0.01));

    const auto tab = HFunction::table({10.0, 20.0, 30.0}, {1.0, 2.0, 4.0});
    CHECK(tab(15.0) == doctest::Approx(1.5));
    CHECK(tab(35.0) == doctest::Approx(5.0));
    CHECK(tab(5.0) == doctest::Approx(0.5));
    CHECK_THROWS_AS((void)tab.with_gamma(0.1), ConfigError);
    CHECK_THROWS_AS((void)HFunction::table({1.0, 1.0}, {0.0, 0.0}), ConfigError);
}

TEST_CASE("coupling parameters are validated with their field path") {
    CouplingParams p;
    p.r_dc = -1.0;
    CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("coupling.R_DC"), ConfigError);
    p = {};
    p.cop = 0.0;
    CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("coupling.COP"), ConfigError);
    CHECK_THROWS_AS((void)compose(pair(), fixtures::reference_terms(), p), ConfigError);
}

TEST_CASE("subsystems must share a step size") {
    auto slow = wann::WannParams::reference();
    slow.dt = 0.002;
    std::vector<SubsystemModel> subs{fixtures::microgrid_model(), wann::realize_state_space(slow)};
    CHECK_THROWS_AS((void)compose(subs, fixtures::reference_terms(), {}), ConfigError);
    std::vector<SubsystemModel> twice{fixtures::wann_model(), fixtures::wann_model()};
    CHECK_THROWS_AS((void)compose(twice, {}, {}), ConfigError);
}
