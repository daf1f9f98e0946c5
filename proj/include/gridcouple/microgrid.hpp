#pragma once

#include <array>
#include <string>
#include <vector>

#include "gridcouple/model.hpp"

namespace gridcouple::microgrid {

/// Open-circuit voltage per cell as a function of state of charge.
///
/// Either a polynomial in SOC (ascending coefficients) or a breakpoint table with
/// linear interpolation. Tables extrapolate linearly from their end segments so
/// solvers can step outside [0, 1].
class VocCurve {
public:
    /// 3.0 + 2.4 s - 2.4 s^2 + 1.2 s^3: V_oc(0) = 3.0 V, V_oc(1) = 4.2 V, increasing on all of R.
    static VocCurve default_curve();
    static VocCurve polynomial(std::vector<double> coefficients);
    static VocCurve table(std::vector<double> soc, std::vector<double> volts);
    /// Two whitespace-separated columns (SOC, volts); '#' starts a comment.
    static VocCurve load_table(const std::string& path);

    [[nodiscard]] double operator()(double soc) const;
    [[nodiscard]] double slope(double soc) const;
    /// Sampled check on [0, 1].
    [[nodiscard]] bool monotone_on_unit_interval() const;

    [[nodiscard]] bool is_table() const { return !soc_.empty(); }
    [[nodiscard]] const std::vector<double>& coefficients() const { return coefficients_; }

private:
    std::vector<double> coefficients_;
    std::vector<double> soc_;
    std::vector<double> volts_;
};

struct BatteryParams {
    double cells_parallel = 400.0;  // N_p
    double modules_series = 100.0;  // N_s
    double capacity_ah = 1.21;      // Q per cell
    double c2 = 15000.0;            // F
    double r1 = 0.0198;             // ohm
    double r2 = 0.2331;             // ohm
    VocCurve voc = VocCurve::default_curve();
    /// When true Q is converted to coulombs (Q * 3600) in dSOC/dt. False keeps raw Ah.
    bool capacity_in_coulombs = true;

    [[nodiscard]] double capacity_charge() const { return capacity_in_coulombs ? capacity_ah * 3600.0 : capacity_ah; }
    void validate(const std::string& path = "microgrid.battery") const;
};

/// Shared by the buck (sd) and boost (su) converters.
struct ConverterParams {
    double l = 1.0;         // H
    double c1 = 1000.0;     // F
    double c2 = 1000.0;     // F
    double r1 = 10000.0;    // ohm
    double r2 = 10000.0;    // ohm
    double r3 = 0.0050;     // ohm
    void validate(const std::string& path) const;
};

/// Single-diode panel constants (reference conditions G_ref, T_ref).
struct DiodeParams {
    double series_cells = 48.0;
    double ideality = 1.3;
    double r_series = 0.2;       // ohm
    double r_shunt = 300.0;      // ohm
    double i_sc_ref = 5.0;       // A
    double v_oc_ref = 32.5;      // V
    double k_i = 0.002;          // A/K
    double k_v = -0.1;           // V/K
    double g_ref = 1000.0;       // W/m^2
    double t_ref_c = 25.0;       // degC
    double tolerance = 1e-10;    // A, residual accepted from the implicit solve
    void validate(const std::string& path = "microgrid.pv.diode") const;
};

struct PvParams {
    double panels_parallel = 100.0;  // N_p,pv
    double c_thermal = 4580.0;       // J/K
    double absorptivity = 0.7;
    double area = 0.8;               // m^2
    double h_conv = 13.39;           // W/(m^2 K)
    DiodeParams diode;
    void validate(const std::string& path = "microgrid.pv") const;
};

struct BusParams {
    double l1 = 1.0;     // H
    double l2 = 1.0;     // H
    double c = 100.0;    // F
    double r1 = 0.0001;  // ohm
    double r2 = 0.0001;  // ohm
    void validate(const std::string& path = "microgrid.bus") const;
};

struct MicrogridParams {
    BatteryParams battery;
    ConverterParams buck;
    ConverterParams boost;
    PvParams pv;
    BusParams bus;
    /// Duty cycles within this distance outside [0, 1] pass through unclamped so
    /// finite-difference probes around D = 0 or D = 1 stay smooth.
    double duty_tolerance = 1e-3;
    void validate() const;
};

/// State, control and disturbance indices of the 12-state model.
namespace idx {
enum State : Eigen::Index { SOC, Q2_BAT, I_L_SD, V_BAT, V_C2_SD, T_PV, I_L_SU, V_PV, V_C2_SU, I_L1_BUS, I_L2_BUS, V_BUS };
enum Control : Eigen::Index { D_SD, D_SU, D_LOAD };
enum Disturbance : Eigen::Index { G, T_INF, I_O, I_LOSS };
}  // namespace idx

inline constexpr std::size_t kStateCount = 12;

[[nodiscard]] ModelSignals microgrid_signals();

/// I_bat = (N_p / R1) (V_oc(SOC) + q2 / C2 - V_bat / N_s). Positive discharges.
[[nodiscard]] double battery_current(const BatteryParams& p, double soc, double q2, double v_bat);

struct BatteryRates {
    double dsoc;
    double dq2;
};
[[nodiscard]] BatteryRates battery_derivatives(const BatteryParams& p, double soc, double q2, double v_bat);

/// (dI_L, dV_bat, dV_c2) of the buck converter. Throws UsageError for D outside [0, 1].
[[nodiscard]] std::array<double, 3> buck_derivatives(const ConverterParams& p, double i_l, double v_bat, double v_c2,
                                                     double duty, double i_bat, double i_l2_bus);

/// Per-panel current from the implicit single-diode equation; t_pv in degC.
/// Throws NumericalError when the inner solve cannot meet the diode tolerance.
[[nodiscard]] double pv_current(const PvParams& p, double v_pv, double t_pv, double g);

/// dT_pv/dt in K/s.
[[nodiscard]] double pv_thermal_derivative(const PvParams& p, double t_pv, double g, double t_inf, double v_pv);

/// (dI_L, dV_pv, dV_c2) of the boost converter.
[[nodiscard]] std::array<double, 3> boost_derivatives(const ConverterParams& p, const PvParams& pv, double i_l,
                                                      double v_pv, double v_c2, double duty, double g, double t_pv,
                                                      double i_l1_bus);

/// (dI_L1, dI_L2, dV_bus).
[[nodiscard]] std::array<double, 3> bus_derivatives(const BusParams& p, double i_l1, double i_l2, double v_bus,
                                                    double v_c2_su, double v_c2_sd, double d_load, double i_o,
                                                    double i_loss);

/// The 12-state averaged microgrid, id "mg".
[[nodiscard]] ContinuousModel build_microgrid(const MicrogridParams& params);

}  // namespace gridcouple::microgrid
