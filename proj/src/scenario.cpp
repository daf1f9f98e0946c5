#include "gridcouple/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace gridcouple::cli {
namespace {

struct Entry {
    std::string key;
    std::string value;
    bool quoted = false;
    int line = 0;
    int key_column = 0;
    int value_column = 0;
};

struct Section {
    std::string name;
    int line = 0;
    std::vector<Entry> entries;
};

class Source {
public:
    explicit Source(std::string origin) : origin_(std::move(origin)) {}
    [[nodiscard]] const std::string& origin() const { return origin_; }

    [[noreturn]] void fail(int line, int column, const std::string& message) const {
        throw ConfigError(origin_ + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + message);
    }
    [[noreturn]] void fail(const Entry& e, const std::string& message) const { fail(e.line, e.value_column, message); }

private:
    std::string origin_;
};

bool name_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

int column_of(std::string_view line, std::string_view part) { return static_cast<int>(part.data() - line.data()) + 1; }

std::vector<Section> split_sections(std::string_view text, const Source& src) {
    std::vector<Section> sections;
    std::set<std::string> seen;
    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = std::min(text.find('\n', start), text.size());
        std::string_view raw = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);

        bool in_quote = false;
        std::size_t cut = raw.size();
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (raw[i] == '"') in_quote = !in_quote;
            if (raw[i] == '#' && !in_quote) {
                cut = i;
                break;
            }
        }
        if (in_quote) src.fail(line_no, static_cast<int>(raw.size()) + 1, "unterminated string");
        const std::string_view body = trim(raw.substr(0, cut));
        if (body.empty()) continue;

        if (body.front() == '[') {
            if (body.back() != ']') src.fail(line_no, column_of(raw, body), "expected ']' to close the section header");
            const auto name = trim(body.substr(1, body.size() - 2));
            if (name.empty() || !std::all_of(name.begin(), name.end(), name_char)) {
                src.fail(line_no, column_of(raw, body), "malformed section name");
            }
            if (!seen.insert(std::string(name)).second) {
                src.fail(line_no, column_of(raw, name), "section [" + std::string(name) + "] appears twice");
            }
            sections.push_back({std::string(name), line_no, {}});
            continue;
        }

        const auto eq = body.find('=');
        if (eq == std::string_view::npos) src.fail(line_no, column_of(raw, body), "expected 'key = value'");
        if (sections.empty()) src.fail(line_no, column_of(raw, body), "key outside of any section");
        const auto key = trim(body.substr(0, eq));
        auto value = trim(body.substr(eq + 1));
        if (key.empty() || !std::all_of(key.begin(), key.end(), name_char)) {
            src.fail(line_no, column_of(raw, body), "malformed key");
        }
        Entry e{std::string(key), {}, false, line_no, column_of(raw, key), 0};
        if (value.empty()) src.fail(line_no, column_of(raw, body) + static_cast<int>(eq) + 1, "missing value");
        if (value.front() == '"') {
            if (value.size() < 2 || value.back() != '"') src.fail(line_no, column_of(raw, value), "unterminated string");
            e.quoted = true;
            value = value.substr(1, value.size() - 2);
            e.value_column = column_of(raw, value);
        } else {
            e.value_column = column_of(raw, value);
        }
        e.value = std::string(value);
        auto& sec = sections.back();
        if (sec.name != "coupling.terms") {
            for (const auto& other : sec.entries) {
                if (other.key == e.key) src.fail(e.line, e.key_column, sec.name + "." + e.key + " is set twice");
            }
        }
        sec.entries.push_back(std::move(e));
    }
    return sections;
}

double parse_number(const Source& src, const Entry& e, std::string_view text) {
    text = trim(text);
    double v = 0.0;
    const char* first = text.data();
    const char* last = first + text.size();
    if (!text.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || text.empty()) src.fail(e, "expected a number, got '" + std::string(text) + "'");
    if (!std::isfinite(v)) src.fail(e, "value must be finite");
    return v;
}

std::vector<double> parse_list(const Source& src, const Entry& e) {
    std::vector<double> out;
    std::string_view rest = e.value;
    for (;;) {
        const auto comma = rest.find(',');
        out.push_back(parse_number(src, e, rest.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
    }
    return out;
}

std::string show(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string show(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + show(v[i]);
    return out;
}

struct Field {
    std::function<void(const Entry&)> set;
    std::function<std::string()> show;
};

class Schema {
public:
    explicit Schema(const Source& src) : src_(src) {}

    void number(const std::string& section, const std::string& key, double& target) {
        add(section, key, {[this, &target](const Entry& e) { target = parse_number(src_, e, e.value); },
                           [&target] { return show(target); }});
    }

    void count(const std::string& section, const std::string& key, std::size_t& target, std::size_t min = 0) {
        add(section, key,
            {[this, &target, min](const Entry& e) {
                 const double v = parse_number(src_, e, e.value);
                 if (v != std::floor(v) || v < static_cast<double>(min) || v > 1e15) {
                     src_.fail(e, "expected an integer >= " + std::to_string(min));
                 }
                 target = static_cast<std::size_t>(v);
             },
             [&target] { return std::to_string(target); }});
    }

    void integer(const std::string& section, const std::string& key, int& target, int min) {
        add(section, key,
            {[this, &target, min](const Entry& e) {
                 const double v = parse_number(src_, e, e.value);
                 if (v != std::floor(v) || v < min || v > 1e9) src_.fail(e, "expected an integer >= " + std::to_string(min));
                 target = static_cast<int>(v);
             },
             [&target] { return std::to_string(target); }});
    }

    void boolean(const std::string& section, const std::string& key, bool& target) {
        add(section, key,
            {[this, &target](const Entry& e) {
                 if (e.value == "true") target = true;
                 else if (e.value == "false") target = false;
                 else src_.fail(e, "expected true or false");
             },
             [&target] { return std::string(target ? "true" : "false"); }});
    }

    void word(const std::string& section, const std::string& key, std::string& target,
              std::vector<std::string> allowed = {}) {
        add(section, key,
            {[this, &target, allowed](const Entry& e) {
                 if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), e.value) == allowed.end()) {
                     std::string opts;
                     for (const auto& a : allowed) opts += (opts.empty() ? "" : ", ") + a;
                     src_.fail(e, "expected one of: " + opts);
                 }
                 target = e.value;
             },
             [&target] { return target; }});
    }

    void list(const std::string& section, const std::string& key, std::vector<double>& target) {
        add(section, key, {[this, &target](const Entry& e) { target = parse_list(src_, e); },
                           [&target] { return show(target); }});
    }

    [[nodiscard]] bool knows(const std::string& section) const { return fields_.contains(section); }

    /// Applies every entry of a known section; returns which keys were present.
    void apply(const Section& sec) {
        auto& fields = fields_.at(sec.name);
        for (const auto& e : sec.entries) {
            auto it = fields.find(e.key);
            if (it == fields.end()) src_.fail(e.line, e.key_column, "unknown key " + sec.name + "." + e.key);
            it->second.set(e);
            set_.insert(sec.name + "." + e.key);
        }
    }

    [[nodiscard]] bool was_set(const std::string& path) const { return set_.contains(path); }

    [[nodiscard]] std::vector<std::string> defaults() const {
        std::vector<std::string> out;
        for (const auto& [section, fields] : fields_) {
            for (const auto& [key, field] : fields) {
                const auto path = section + "." + key;
                const auto value = field.show();
                if (!set_.contains(path) && !value.empty()) out.push_back(path + " = " + value);
            }
        }
        return out;
    }

private:
    void add(const std::string& section, const std::string& key, Field f) { fields_[section][key] = std::move(f); }

    const Source& src_;
    std::map<std::string, std::map<std::string, Field>> fields_;
    std::set<std::string> set_;
};

void converter_fields(Schema& s, const std::string& sec, microgrid::ConverterParams& p) {
    s.number(sec, "L", p.l);
    s.number(sec, "C1", p.c1);
    s.number(sec, "C2", p.c2);
    s.number(sec, "R1", p.r1);
    s.number(sec, "R2", p.r2);
    s.number(sec, "R3", p.r3);
}

wann::Activation parse_activation(const Source& src, const Section& sec, std::size_t n) {
    std::map<std::string, const Entry*> kv;
    for (const auto& e : sec.entries) kv[e.key] = &e;
    auto get = [&](const std::string& key) -> const Entry* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : it->second;
    };
    auto require = [&](const std::string& key) -> const Entry& {
        const Entry* e = get(key);
        if (!e) src.fail(sec.line, 1, sec.name + "." + key + " is required");
        return *e;
    };
    const Entry& type = require("type");
    std::set<std::string> allowed{"type", "weight"};
    wann::Activation a = wann::Activation::affine(0.0, 0.0, 1);
    if (type.value == "affine") {
        allowed.insert({"bias", "arity"});
        const double w = parse_number(src, require("weight"), require("weight").value);
        const double b = get("bias") ? parse_number(src, *get("bias"), get("bias")->value) : 0.0;
        std::size_t arity = n == 1 ? 2 : 3;
        if (const Entry* e = get("arity")) {
            const double v = parse_number(src, *e, e->value);
            if (v != std::floor(v) || v < 1 || v > 16) src.fail(*e, "arity must be an integer in [1, 16]");
            arity = static_cast<std::size_t>(v);
        }
        a = wann::Activation::affine(w, b, arity);
    } else if (type.value == "waterfall-sigmoid") {
        allowed.insert({"slope", "offset"});
        const double w = parse_number(src, require("weight"), require("weight").value);
        const double slope = get("slope") ? parse_number(src, *get("slope"), get("slope")->value) : 0.5;
        const double offset = get("offset") ? parse_number(src, *get("offset"), get("offset")->value) : 10.0;
        a = wann::Activation::waterfall_sigmoid(w, slope, offset);
    } else {
        src.fail(type, "unknown activation '" + type.value + "' (affine, waterfall-sigmoid)");
    }
    for (const auto& e : sec.entries) {
        if (!allowed.contains(e.key)) src.fail(e.line, e.key_column, "unknown key " + sec.name + "." + e.key);
    }
    return a;
}

}  // namespace

BuiltSystem build_system(const Scenario& s, std::optional<double> gamma) {
    auto mg = discretize_euler(microgrid::build_microgrid(s.microgrid), s.dt);
    auto wp = s.wann;
    wp.dt = s.dt;
    auto dc = wann::realize_state_space(wp);
    auto cp = s.coupling;
    if (gamma) cp.h = cp.h.with_gamma(*gamma);
    auto terms = s.mode == Mode::Coupled ? s.terms : std::vector<coupling::CouplingTerm>{};
    auto sys = coupling::compose({std::move(mg), std::move(dc)}, std::move(terms), cp);

    const auto& sig = sys.model().signals();
    std::set<std::string> used;
    auto fill = [&](const SignalSet& set) {
        Vec v(static_cast<Eigen::Index>(set.size()));
        for (std::size_t i = 0; i < set.size(); ++i) {
            auto it = std::find_if(s.inputs.begin(), s.inputs.end(), [&](const auto& nv) { return nv.name == set[i].name; });
            if (it == s.inputs.end()) throw ConfigError("inputs." + set[i].name + " is required (free " +
                                                        std::string(to_string(set.role())) + " input)");
            v[static_cast<Eigen::Index>(i)] = it->value;
            used.insert(it->name);
        }
        return v;
    };
    BuiltSystem out{sys, fill(sig.controls), fill(sig.disturbances), {}};
    for (const auto& nv : s.inputs) {
        if (!used.contains(nv.name)) {
            throw ConfigError("inputs." + nv.name + " is not a free input of this scenario");
        }
    }
    for (const auto& seed : s.seeds) {
        Vec x = Vec::Zero(static_cast<Eigen::Index>(sig.states.size()));
        for (const auto& nv : seed.states) {
            const auto i = sig.states.find(nv.name);
            if (!i) throw ConfigError("seed." + seed.name + "." + nv.name + " is not a state");
            x[static_cast<Eigen::Index>(*i)] = nv.value;
        }
        out.seeds.push_back(std::move(x));
    }
    if (out.seeds.empty()) out.seeds.push_back(Vec::Zero(static_cast<Eigen::Index>(sig.states.size())));
    return out;
}

Scenario parse_scenario(std::string_view text, const std::string& origin) {
    const Source src(origin);
    const auto sections = split_sections(text, src);
    Scenario s;
    Schema schema(src);

    std::string mode = "coupled";
    schema.word("scenario", "name", s.name);
    schema.word("scenario", "mode", mode, {"coupled", "uncoupled"});
    schema.number("scenario", "dt", s.dt);
    std::size_t rng_seed = 1;
    schema.count("scenario", "seed", rng_seed);

    auto& mg = s.microgrid;
    std::string voc = "polynomial";
    std::vector<double> voc_coefficients = mg.battery.voc.coefficients();
    std::string voc_table;
    schema.number("microgrid", "duty_tolerance", mg.duty_tolerance);
    schema.number("microgrid.battery", "N_p", mg.battery.cells_parallel);
    schema.number("microgrid.battery", "N_s", mg.battery.modules_series);
    schema.number("microgrid.battery", "Q", mg.battery.capacity_ah);
    schema.number("microgrid.battery", "C2", mg.battery.c2);
    schema.number("microgrid.battery", "R1", mg.battery.r1);
    schema.number("microgrid.battery", "R2", mg.battery.r2);
    schema.boolean("microgrid.battery", "Q_in_coulombs", mg.battery.capacity_in_coulombs);
    schema.word("microgrid.battery", "voc", voc, {"polynomial", "table"});
    schema.list("microgrid.battery", "voc_coefficients", voc_coefficients);
    schema.word("microgrid.battery", "voc_table", voc_table);
    converter_fields(schema, "microgrid.buck", mg.buck);
    converter_fields(schema, "microgrid.boost", mg.boost);
    schema.number("microgrid.pv", "N_p", mg.pv.panels_parallel);
    schema.number("microgrid.pv", "C", mg.pv.c_thermal);
    schema.number("microgrid.pv", "alpha", mg.pv.absorptivity);
    schema.number("microgrid.pv", "A_s", mg.pv.area);
    schema.number("microgrid.pv", "h", mg.pv.h_conv);
    auto& dp = mg.pv.diode;
    schema.number("microgrid.pv.diode", "series_cells", dp.series_cells);
    schema.number("microgrid.pv.diode", "ideality", dp.ideality);
    schema.number("microgrid.pv.diode", "R_s", dp.r_series);
    schema.number("microgrid.pv.diode", "R_p", dp.r_shunt);
    schema.number("microgrid.pv.diode", "I_sc_ref", dp.i_sc_ref);
    schema.number("microgrid.pv.diode", "V_oc_ref", dp.v_oc_ref);
    schema.number("microgrid.pv.diode", "K_i", dp.k_i);
    schema.number("microgrid.pv.diode", "K_v", dp.k_v);
    schema.number("microgrid.pv.diode", "G_ref", dp.g_ref);
    schema.number("microgrid.pv.diode", "T_ref", dp.t_ref_c);
    schema.number("microgrid.pv.diode", "tolerance", dp.tolerance);
    schema.number("microgrid.bus", "L1", mg.bus.l1);
    schema.number("microgrid.bus", "L2", mg.bus.l2);
    schema.number("microgrid.bus", "C", mg.bus.c);
    schema.number("microgrid.bus", "R1", mg.bus.r1);
    schema.number("microgrid.bus", "R2", mg.bus.r2);

    std::string h_family = "linear";
    double h0 = s.coupling.h.h0(), t_ref = s.coupling.h.t_ref(), gamma = s.coupling.h.gamma();
    std::vector<double> h_t, h_v;
    schema.number("coupling", "COP", s.coupling.cop);
    schema.number("coupling", "R_DC", s.coupling.r_dc);
    schema.word("coupling", "H", h_family, {"linear", "table"});
    schema.number("coupling", "H0", h0);
    schema.number("coupling", "T_ref", t_ref);
    schema.number("coupling", "gamma", gamma);
    schema.list("coupling", "H_table_T", h_t);
    schema.list("coupling", "H_table_H", h_v);

    auto& eq = s.equilibrium;
    schema.number("equilibrium", "tolerance", eq.tolerance);
    schema.integer("equilibrium", "max_iterations", eq.max_iterations, 1);
    schema.integer("equilibrium", "max_halvings", eq.max_halvings, 0);
    schema.count("equilibrium", "preroll_steps", eq.preroll_steps);
    schema.number("equilibrium", "epsilon", eq.jacobian.epsilon);
    schema.number("stability", "tol_margin", s.tol_margin);
    schema.count("lyapunov", "samples", s.lyapunov.samples, 1);
    schema.number("lyapunov", "radius", s.lyapunov.radius);
    schema.number("controllability", "absolute_floor", s.controllability_floor);
    schema.word("simulate", "initial", s.simulate.initial);
    schema.number("simulate", "perturbation", s.simulate.perturbation);
    schema.count("simulate", "steps", s.simulate.steps, 1);
    schema.count("simulate", "stride", s.simulate.stride, 1);
    schema.number("sweep", "gamma_min", s.sweep.gamma_min);
    schema.number("sweep", "gamma_max", s.sweep.gamma_max);
    schema.count("sweep", "points", s.sweep.points, 1);

    std::vector<const Section*> phis;
    bool has_terms = false;
    for (const auto& sec : sections) {
        if (schema.knows(sec.name)) {
            schema.apply(sec);
        } else if (sec.name == "coupling.terms") {
            has_terms = true;
            for (const auto& e : sec.entries) {
                if (!e.quoted) src.fail(e, "coupling expressions must be quoted");
                try {
                    s.terms.push_back(coupling::CouplingTerm::parse(e.key, e.value, {e.line, e.value_column}));
                } catch (const expr::ParseError& err) {
                    throw ConfigError(origin + ": " + err.what());
                } catch (const ConfigError& err) {
                    src.fail(e.line, e.key_column, err.what());
                }
            }
        } else if (sec.name == "inputs") {
            for (const auto& e : sec.entries) s.inputs.push_back({e.key, parse_number(src, e, e.value)});
        } else if (sec.name.rfind("seed.", 0) == 0 && sec.name.size() > 5) {
            Seed seed{sec.name.substr(5), {}};
            for (const auto& e : sec.entries) seed.states.push_back({e.key, parse_number(src, e, e.value)});
            s.seeds.push_back(std::move(seed));
        } else if (sec.name.rfind("wann.phi", 0) == 0) {
            phis.push_back(&sec);
        } else {
            src.fail(sec.line, 1, "unknown section [" + sec.name + "]");
        }
    }

    s.name = s.name.empty() ? std::filesystem::path(origin).stem().string() : s.name;
    s.mode = mode == "coupled" ? Mode::Coupled : Mode::Uncoupled;
    s.seed = rng_seed;
    if (!(s.dt > 0.0)) throw ConfigError("scenario.dt must be positive");

    if (voc == "table") {
        if (voc_table.empty()) throw ConfigError("microgrid.battery.voc_table is required when voc = table");
        auto path = std::filesystem::path(voc_table);
        if (path.is_relative()) path = std::filesystem::path(origin).parent_path() / path;
        mg.battery.voc = microgrid::VocCurve::load_table(path.string());
    } else {
        mg.battery.voc = microgrid::VocCurve::polynomial(voc_coefficients);
    }
    mg.validate();

    if (!phis.empty()) {
        s.wann.activations.clear();
        for (std::size_t n = 1; n <= phis.size(); ++n) {
            const auto want = "wann.phi" + std::to_string(n);
            auto it = std::find_if(phis.begin(), phis.end(), [&](const Section* p) { return p->name == want; });
            if (it == phis.end()) throw ConfigError("[" + want + "] is missing; neurons must be numbered 1..N");
            s.wann.activations.push_back(parse_activation(src, **it, n));
        }
    } else {
        s.defaults_applied.push_back("wann.phi1..phi3 = reference weights");
    }
    s.wann.dt = s.dt;
    s.wann.validate();

    if (h_family == "table") {
        if (h_t.empty() || h_v.empty()) throw ConfigError("coupling.H_table_T and coupling.H_table_H are required when H = table");
        s.coupling.h = coupling::HFunction::table(h_t, h_v);
    } else {
        s.coupling.h = coupling::HFunction::linear(h0, t_ref, gamma);
    }
    s.coupling.validate("coupling");

    if (s.mode == Mode::Uncoupled && has_terms && !s.terms.empty()) {
        throw ConfigError("coupling.terms must be empty in uncoupled mode");
    }
    if (s.mode == Mode::Coupled && s.terms.empty()) throw ConfigError("coupling.terms: coupled mode needs at least one term");

    if (!(eq.tolerance > 0.0)) throw ConfigError("equilibrium.tolerance must be positive");
    if (!(eq.jacobian.epsilon > 0.0)) throw ConfigError("equilibrium.epsilon must be positive");
    if (!(s.tol_margin >= 0.0)) throw ConfigError("stability.tol_margin must be non-negative");
    if (!(s.lyapunov.radius > 0.0)) throw ConfigError("lyapunov.radius must be positive");
    if (!(s.controllability_floor >= 0.0)) throw ConfigError("controllability.absolute_floor must be non-negative");
    if (!(s.simulate.perturbation >= 0.0)) throw ConfigError("simulate.perturbation must be non-negative");
    if (!(s.sweep.gamma_min <= s.sweep.gamma_max)) throw ConfigError("sweep.gamma_min must not exceed sweep.gamma_max");
    if (s.simulate.initial != "equilibrium" &&
        std::none_of(s.seeds.begin(), s.seeds.end(), [&](const Seed& sd) { return sd.name == s.simulate.initial; })) {
        throw ConfigError("simulate.initial must be 'equilibrium' or a seed name, got '" + s.simulate.initial + "'");
    }

    // Composition checks the coupling guidelines, inputs and seed names.
    (void)build_system(s);

    auto defaults = schema.defaults();
    s.defaults_applied.insert(s.defaults_applied.end(), defaults.begin(), defaults.end());
    if (s.seeds.empty()) s.defaults_applied.push_back("seed = zero state");
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read scenario " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str(), path);
}

}  // namespace gridcouple::cli
