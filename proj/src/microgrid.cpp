#include "gridcouple/microgrid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "gridcouple/errors.hpp"
#include "gridcouple/log.hpp"

namespace gridcouple::microgrid {
namespace {

constexpr double kBoltzmann = 1.380649e-23;
constexpr double kElectronCharge = 1.602176634e-19;
constexpr double kKelvinOffset = 273.15;

void require_positive(double v, const std::string& path) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(path + " must be positive and finite, got " + std::to_string(v));
}

void require_duty(double d, const char* name) {
    if (!(d >= 0.0 && d <= 1.0)) throw UsageError(std::string(name) + " must lie in [0, 1], got " + std::to_string(d));
}

std::array<double, 3> buck_unchecked(const ConverterParams& p, double i_l, double v_bat, double v_c2, double duty,
                                     double i_bat, double i_l2_bus) {
    return {(duty * v_bat - p.r3 * i_l - v_c2) / p.l,
            (i_bat - duty * i_l - v_bat / p.r1) / p.c1,
            (i_l - i_l2_bus - v_c2 / p.r2) / p.c2};
}

std::array<double, 3> boost_unchecked(const ConverterParams& p, double panels, double i_pv, double i_l, double v_pv,
                                      double v_c2, double duty, double i_l1_bus) {
    return {(v_pv - p.r3 * i_l - duty * v_c2) / p.l,
            (panels * i_pv - i_l - v_pv / p.r1) / p.c1,
            (duty * i_l - i_l1_bus - v_c2 / p.r2) / p.c2};
}

std::array<double, 3> bus_unchecked(const BusParams& p, double i_l1, double i_l2, double v_bus, double v_c2_su,
                                    double v_c2_sd, double d_load, double i_o, double i_loss) {
    return {(v_c2_su - v_bus - p.r1 * i_l1) / p.l1,
            (v_c2_sd - v_bus - p.r2 * i_l2) / p.l2,
            (i_l1 + i_l2 - i_loss - d_load * i_o) / p.c};
}

double thermal_unchecked(const PvParams& p, double t_pv, double g, double t_inf, double v_pv, double i_pv) {
    return (p.absorptivity * p.area * g - p.h_conv * p.area * (t_pv - t_inf) - v_pv * i_pv) / p.c_thermal;
}

double effective_duty(double d, double tolerance, const char* name) {
    if (d >= -tolerance && d <= 1.0 + tolerance) return d;
    const double clamped = std::clamp(d, 0.0, 1.0);
    if (std::isfinite(d)) warn(std::string(name) + " = " + std::to_string(d) + " clamped to " + std::to_string(clamped));
    return clamped;
}

}  // namespace

// ---------------------------------------------------------------------------
// VocCurve

VocCurve VocCurve::default_curve() { return polynomial({3.0, 2.4, -2.4, 1.2}); }

VocCurve VocCurve::polynomial(std::vector<double> coefficients) {
    if (coefficients.empty()) throw ConfigError("V_oc polynomial needs at least one coefficient");
    for (double c : coefficients) {
        if (!std::isfinite(c)) throw ConfigError("V_oc polynomial coefficient is not finite");
    }
    VocCurve curve;
    curve.coefficients_ = std::move(coefficients);
    return curve;
}

VocCurve VocCurve::table(std::vector<double> soc, std::vector<double> volts) {
    if (soc.size() != volts.size() || soc.size() < 2) throw ConfigError("V_oc table needs at least two (SOC, V) rows");
    for (std::size_t i = 0; i < soc.size(); ++i) {
        if (!std::isfinite(soc[i]) || !std::isfinite(volts[i])) throw ConfigError("V_oc table entry is not finite");
        if (i > 0 && !(soc[i] > soc[i - 1])) throw ConfigError("V_oc table SOC breakpoints must be strictly increasing");
    }
    VocCurve curve;
    curve.soc_ = std::move(soc);
    curve.volts_ = std::move(volts);
    return curve;
}

VocCurve VocCurve::load_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open V_oc table '" + path + "'");
    std::vector<double> soc;
    std::vector<double> volts;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream row(line);
        double s = 0.0;
        double v = 0.0;
        if (!(row >> s)) continue;
        std::string extra;
        if (!(row >> v) || (row >> extra)) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected two numeric columns");
        }
        soc.push_back(s);
        volts.push_back(v);
    }
    return table(std::move(soc), std::move(volts));
}

double VocCurve::operator()(double soc) const {
    if (soc_.empty()) {
        double acc = 0.0;
        for (auto it = coefficients_.rbegin(); it != coefficients_.rend(); ++it) acc = acc * soc + *it;
        return acc;
    }
    std::size_t hi = static_cast<std::size_t>(std::upper_bound(soc_.begin(), soc_.end(), soc) - soc_.begin());
    hi = std::clamp<std::size_t>(hi, 1, soc_.size() - 1);
    const std::size_t lo = hi - 1;
    const double t = (soc - soc_[lo]) / (soc_[hi] - soc_[lo]);
    return volts_[lo] + t * (volts_[hi] - volts_[lo]);
}

double VocCurve::slope(double soc) const {
    if (soc_.empty()) {
        double acc = 0.0;
        for (std::size_t k = coefficients_.size(); k-- > 1;) acc = acc * soc + static_cast<double>(k) * coefficients_[k];
        return acc;
    }
    std::size_t hi = static_cast<std::size_t>(std::upper_bound(soc_.begin(), soc_.end(), soc) - soc_.begin());
    hi = std::clamp<std::size_t>(hi, 1, soc_.size() - 1);
    return (volts_[hi] - volts_[hi - 1]) / (soc_[hi] - soc_[hi - 1]);
}

bool VocCurve::monotone_on_unit_interval() const {
    constexpr int kSamples = 1000;
    double prev = (*this)(0.0);
    for (int i = 1; i <= kSamples; ++i) {
        const double v = (*this)(static_cast<double>(i) / kSamples);
        if (v < prev) return false;
        prev = v;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Parameter validation

void BatteryParams::validate(const std::string& path) const {
    require_positive(cells_parallel, path + ".N_p");
    require_positive(modules_series, path + ".N_s");
    require_positive(capacity_ah, path + ".Q");
    require_positive(c2, path + ".C2");
    require_positive(r1, path + ".R1");
    require_positive(r2, path + ".R2");
    if (!voc.monotone_on_unit_interval()) throw ConfigError(path + ".voc must be non-decreasing on [0, 1]");
}

void ConverterParams::validate(const std::string& path) const {
    require_positive(l, path + ".L");
    require_positive(c1, path + ".C1");
    require_positive(c2, path + ".C2");
    require_positive(r1, path + ".R1");
    require_positive(r2, path + ".R2");
    require_positive(r3, path + ".R3");
}

void DiodeParams::validate(const std::string& path) const {
    require_positive(series_cells, path + ".series_cells");
    require_positive(ideality, path + ".ideality");
    require_positive(r_series, path + ".R_s");
    require_positive(r_shunt, path + ".R_p");
    require_positive(i_sc_ref, path + ".I_sc_ref");
    require_positive(v_oc_ref, path + ".V_oc_ref");
    require_positive(g_ref, path + ".G_ref");
    require_positive(tolerance, path + ".tolerance");
    if (!std::isfinite(k_i) || !std::isfinite(k_v) || !std::isfinite(t_ref_c)) {
        throw ConfigError(path + " temperature coefficients must be finite");
    }
}

void PvParams::validate(const std::string& path) const {
    require_positive(panels_parallel, path + ".N_p");
    require_positive(c_thermal, path + ".C");
    require_positive(area, path + ".A_s");
    require_positive(h_conv, path + ".h");
    if (!(absorptivity > 0.0 && absorptivity <= 1.0)) {
        throw ConfigError(path + ".alpha must lie in (0, 1], got " + std::to_string(absorptivity));
    }
    diode.validate(path + ".diode");
}

void BusParams::validate(const std::string& path) const {
    require_positive(l1, path + ".L1");
    require_positive(l2, path + ".L2");
    require_positive(c, path + ".C");
    require_positive(r1, path + ".R1");
    require_positive(r2, path + ".R2");
}

void MicrogridParams::validate() const {
    battery.validate("microgrid.battery");
    buck.validate("microgrid.buck");
    boost.validate("microgrid.boost");
    pv.validate("microgrid.pv");
    bus.validate("microgrid.bus");
    if (!(duty_tolerance >= 0.0 && duty_tolerance < 0.5)) throw ConfigError("microgrid.duty_tolerance must lie in [0, 0.5)");
}

// ---------------------------------------------------------------------------
// Blocks

ModelSignals microgrid_signals() {
    ModelSignals s;
    s.states = SignalSet::of(SignalRole::State, {{"SOC", "-"},
                                                  {"q2_bat", "C"},
                                                  {"I_L_sd", "A"},
                                                  {"V_bat", "V"},
                                                  {"V_c2_sd", "V"},
                                                  {"T_pv", "degC"},
                                                  {"I_L_su", "A"},
                                                  {"V_pv", "V"},
                                                  {"V_c2_su", "V"},
                                                  {"I_L1_bus", "A"},
                                                  {"I_L2_bus", "A"},
                                                  {"V_bus", "V"}});
    s.controls = SignalSet::of(SignalRole::Control, {{"D_sd", "-"}, {"D_su", "-"}, {"D_load", "-"}});
    s.disturbances =
        SignalSet::of(SignalRole::Disturbance, {{"G", "W/m^2"}, {"T_inf", "degC"}, {"I_O", "A"}, {"I_loss", "A"}});
    s.outputs = SignalSet::of(SignalRole::Output, {{"I_bat", "A"}});
    return s;
}

double battery_current(const BatteryParams& p, double soc, double q2, double v_bat) {
    return p.cells_parallel / p.r1 * (p.voc(soc) + q2 / p.c2 - v_bat / p.modules_series);
}

BatteryRates battery_derivatives(const BatteryParams& p, double soc, double q2, double v_bat) {
    const double i_bat = battery_current(p, soc, q2, v_bat);
    return {-i_bat / (p.cells_parallel * p.capacity_charge()), -i_bat / p.cells_parallel - q2 / (p.r2 * p.c2)};
}

std::array<double, 3> buck_derivatives(const ConverterParams& p, double i_l, double v_bat, double v_c2, double duty,
                                       double i_bat, double i_l2_bus) {
    require_duty(duty, "D_sd");
    return buck_unchecked(p, i_l, v_bat, v_c2, duty, i_bat, i_l2_bus);
}

double pv_current(const PvParams& p, double v_pv, double t_pv, double g) {
    if (!(g >= 0.0)) throw UsageError("irradiance must be non-negative, got " + std::to_string(g));
    if (!std::isfinite(v_pv) || !std::isfinite(t_pv) || !std::isfinite(g)) {
        throw NumericalError("pv_current: non-finite operating point", std::numeric_limits<double>::infinity());
    }
    const DiodeParams& d = p.diode;
    const double t_kelvin = t_pv + kKelvinOffset;
    if (!(t_kelvin > 0.0)) throw NumericalError("pv_current: panel temperature below absolute zero", 0.0);
    const double delta_t = t_pv - d.t_ref_c;
    const double a_vt = d.ideality * d.series_cells * kBoltzmann * t_kelvin / kElectronCharge;
    const double i_ph_ref = d.i_sc_ref * (d.r_shunt + d.r_series) / d.r_shunt;
    const double i_ph = (i_ph_ref + d.k_i * delta_t) * g / d.g_ref;
    const double i_0 = (d.i_sc_ref + d.k_i * delta_t) / std::expm1((d.v_oc_ref + d.k_v * delta_t) / a_vt);

    const double rs = d.r_series;
    const double rp = d.r_shunt;
    auto residual = [&](double i) { return i_ph - i_0 * std::expm1((v_pv + rs * i) / a_vt) - (v_pv + rs * i) / rp - i; };
    auto slope = [&](double i) { return -i_0 * std::exp((v_pv + rs * i) / a_vt) * rs / a_vt - rs / rp - 1.0; };

    // residual is strictly decreasing in i; these bounds bracket the root.
    const double scale = 1.0 + rs / rp;
    double hi = (i_ph + i_0 - v_pv / rp) / scale;
    double lo = std::min(-v_pv / rs, (i_ph - v_pv / rp) / scale);
    double i = std::clamp(i_ph - v_pv / rp, lo, hi);

    for (int iter = 0; iter < 200; ++iter) {
        const double f = residual(i);
        if (f == 0.0) return i;
        if (f > 0.0) lo = i; else hi = i;
        double next = i - f / slope(i);
        if (!std::isfinite(next) || next <= lo || next >= hi) next = 0.5 * (lo + hi);
        const double step = std::abs(next - i);
        i = next;
        const double tiny = 1e-15 * std::max(1.0, std::abs(i));
        if (step <= tiny || hi - lo <= tiny) break;
    }
    const double r = residual(i);
    if (!(std::abs(r) <= d.tolerance)) {
        throw NumericalError("pv_current: diode equation did not converge at V_pv = " + std::to_string(v_pv), std::abs(r));
    }
    return i;
}

double pv_thermal_derivative(const PvParams& p, double t_pv, double g, double t_inf, double v_pv) {
    return thermal_unchecked(p, t_pv, g, t_inf, v_pv, pv_current(p, v_pv, t_pv, g));
}

std::array<double, 3> boost_derivatives(const ConverterParams& p, const PvParams& pv, double i_l, double v_pv,
                                        double v_c2, double duty, double g, double t_pv, double i_l1_bus) {
    require_duty(duty, "D_su");
    return boost_unchecked(p, pv.panels_parallel, pv_current(pv, v_pv, t_pv, g), i_l, v_pv, v_c2, duty, i_l1_bus);
}

std::array<double, 3> bus_derivatives(const BusParams& p, double i_l1, double i_l2, double v_bus, double v_c2_su,
                                      double v_c2_sd, double d_load, double i_o, double i_loss) {
    require_duty(d_load, "D_load");
    return bus_unchecked(p, i_l1, i_l2, v_bus, v_c2_su, v_c2_sd, d_load, i_o, i_loss);
}

ContinuousModel build_microgrid(const MicrogridParams& params) {
    params.validate();
    auto derivative = [p = params](const Vec& x, const Vec& u, const Vec& d) -> Vec {
        using namespace idx;
        const double d_sd = effective_duty(u[D_SD], p.duty_tolerance, "D_sd");
        const double d_su = effective_duty(u[D_SU], p.duty_tolerance, "D_su");
        const double d_load = effective_duty(u[D_LOAD], p.duty_tolerance, "D_load");

        const double i_bat = battery_current(p.battery, x[SOC], x[Q2_BAT], x[V_BAT]);
        const double i_pv = pv_current(p.pv, x[V_PV], x[T_PV], d[G]);

        Vec dx(static_cast<Eigen::Index>(kStateCount));
        dx[SOC] = -i_bat / (p.battery.cells_parallel * p.battery.capacity_charge());
        dx[Q2_BAT] = -i_bat / p.battery.cells_parallel - x[Q2_BAT] / (p.battery.r2 * p.battery.c2);

        const auto buck = buck_unchecked(p.buck, x[I_L_SD], x[V_BAT], x[V_C2_SD], d_sd, i_bat, x[I_L2_BUS]);
        dx[I_L_SD] = buck[0];
        dx[V_BAT] = buck[1];
        dx[V_C2_SD] = buck[2];

        dx[T_PV] = thermal_unchecked(p.pv, x[T_PV], d[G], d[T_INF], x[V_PV], i_pv);

        const auto boost =
            boost_unchecked(p.boost, p.pv.panels_parallel, i_pv, x[I_L_SU], x[V_PV], x[V_C2_SU], d_su, x[I_L1_BUS]);
        dx[I_L_SU] = boost[0];
        dx[V_PV] = boost[1];
        dx[V_C2_SU] = boost[2];

        const auto bus = bus_unchecked(p.bus, x[I_L1_BUS], x[I_L2_BUS], x[V_BUS], x[V_C2_SU], x[V_C2_SD], d_load,
                                       d[I_O], d[I_LOSS]);
        dx[I_L1_BUS] = bus[0];
        dx[I_L2_BUS] = bus[1];
        dx[V_BUS] = bus[2];
        return dx;
    };
    auto output = [battery = params.battery](const Vec& x) -> Vec {
        Vec y(1);
        y[0] = battery_current(battery, x[idx::SOC], x[idx::Q2_BAT], x[idx::V_BAT]);
        return y;
    };
    return {"mg", microgrid_signals(), derivative, output};
}

}  // namespace gridcouple::microgrid
