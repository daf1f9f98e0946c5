#pragma once

#include <string>
#include <vector>

#include "gridcouple/coupling.hpp"
#include "gridcouple/microgrid.hpp"
#include "gridcouple/wann.hpp"

namespace fixtures {

inline std::string scenario(const std::string& name) {
    return std::string(GRIDCOUPLE_SOURCE_DIR) + "/scenarios/" + name + ".scenario";
}

inline gridcouple::SubsystemModel microgrid_model(const gridcouple::microgrid::MicrogridParams& p = {}) {
    return gridcouple::discretize_euler(gridcouple::microgrid::build_microgrid(p), 0.001);
}

inline gridcouple::SubsystemModel wann_model() {
    return gridcouple::wann::realize_state_space(gridcouple::wann::WannParams::reference());
}

inline std::vector<gridcouple::coupling::CouplingTerm> reference_terms() {
    using gridcouple::coupling::CouplingTerm;
    return {CouplingTerm::parse_line("dc.u_DC = to_kW(COP * mg.D_load * mg.V_bus * mg.I_O)"),
            CouplingTerm::parse_line("mg.I_O = mg.V_bus / R_DC"),
            CouplingTerm::parse_line("mg.I_loss = mg.V_bus * H(dc.x_DC1)")};
}

inline gridcouple::coupling::CouplingParams params_with_gamma(double gamma) {
    gridcouple::coupling::CouplingParams p;
    p.h = p.h.with_gamma(gamma);
    return p;
}

inline gridcouple::coupling::CoupledSystem reference_system(double gamma = 0.005) {
    return gridcouple::coupling::compose({microgrid_model(), wann_model()}, reference_terms(), params_with_gamma(gamma));
}

}  // namespace fixtures
