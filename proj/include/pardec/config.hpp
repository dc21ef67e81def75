#pragma once

// Scenario configuration: flat "section.key = value" text, one entry per
// line, '#' starts a comment. parse_config collects every problem before
// failing; emit_config writes the fully resolved config in a fixed order and
// reparses to an equal value.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pardec/decomposition.hpp"
#include "pardec/master_equation.hpp"
#include "pardec/models.hpp"

namespace pardec {

class ConfigError : public ValidationError {
public:
    explicit ConfigError(std::vector<std::string> errors)
        : ValidationError(join(errors)), errors_(std::move(errors)) {}
    const std::vector<std::string>& errors() const { return errors_; }

private:
    static std::string join(const std::vector<std::string>& e) {
        std::string s = "invalid config:";
        for (const auto& m : e) s += "\n  - " + m;
        return s;
    }
    std::vector<std::string> errors_;
};

struct ScenarioConfig {
    std::string name = "scenario";

    // model
    std::string model_type;  // two_mode | caldeira_leggett | master_equation
    double m_S = 1.0;
    double m_E = 1.0;
    double omega = 1.0;
    double C = 0.0;
    std::string potential = "free";  // free | harmonic
    double omega_S = 1.0;

    // bath
    std::string bath_type = "ohmic";  // ohmic | explicit
    long bath_N = 32;
    double omega_cutoff = 5.0;
    double eta = 0.1;
    long coupling_sign = -1;
    std::vector<double> oscillators;  // explicit: flattened (m, w, kappa) triples

    // initial state
    double temperature = 0.0;
    double open_mass = 0.0;       // 0 = default for the model
    double open_frequency = 0.0;  // 0 = default for the model
    std::vector<double> alpha_S{1.0, 0.0};
    std::vector<double> beta_S{-1.0, 0.0};
    std::vector<double> alpha_CM{1.0, 0.0};
    std::vector<double> beta_CM{-1.0, 0.0};

    // decomposition
    std::string structures = "both";  // original | cm_relative | both
    std::string family = "jacobi";
    bool allow_positivity_violation = false;
    bool allow_rescale = true;

    // time grid: explicit list, or start/stop/step
    std::vector<double> time_grid;
    double time_start = 0.0;
    double time_stop = 0.0;
    double time_step = 0.0;

    // oracle
    long cutoff_S = 24;
    long cutoff_E = 24;
    long cutoff_CM = 24;
    long cutoff_R = 24;

    // master equation
    std::string master_variant = "harmonic";
    double master_lambda = 0.05;
    long master_cutoff = 40;
    double master_mass = 1.0;
    double master_omega = 1.0;
    double master_x0 = 3.0;
    double master_step = 0.01;
    bool master_corotate = true;

    std::string output_dir = "out";
    long seed = 0;

    bool operator==(const ScenarioConfig&) const = default;

    std::vector<double> grid() const {
        if (!time_grid.empty()) return time_grid;
        std::vector<double> g;
        const auto n = static_cast<long>(std::llround((time_stop - time_start) / time_step));
        for (long k = 0; k <= n; ++k) g.push_back(time_start + static_cast<double>(k) * time_step);
        return g;
    }

    ModeScale open_scale() const {
        ModeScale s{1.0, 1.0};
        if (model_type == "caldeira_leggett" && potential == "harmonic") s = {m_S, omega_S};
        if (open_mass > 0.0) s.mass = open_mass;
        if (open_frequency > 0.0) s.frequency = open_frequency;
        return s;
    }

    SystemPotential system_potential() const {
        if (potential == "harmonic") return HarmonicPotential{omega_S};
        return FreeParticle{};
    }

    BathParams bath() const {
        if (bath_type == "explicit") {
            BathParams b;
            b.coupling_sign = static_cast<int>(coupling_sign);
            for (std::size_t k = 0; k + 2 < oscillators.size(); k += 3)
                b.oscillators.push_back({oscillators[k], oscillators[k + 1], oscillators[k + 2]});
            return b;
        }
        return discretize_ohmic_bath(static_cast<std::size_t>(bath_N), omega_cutoff, eta, static_cast<int>(coupling_sign));
    }

    TwoModeParams two_mode() const { return {m_S, m_E, omega, C}; }
};

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string strip_plus(const std::string& s) {
    auto t = trim(s);
    if (!t.empty() && t[0] == '+') t.erase(0, 1);
    return t;
}

inline bool parse_double(const std::string& s, double& out) {
    const auto t = strip_plus(s);
    if (t.empty()) return false;
    const auto* end = t.data() + t.size();
    auto [p, ec] = std::from_chars(t.data(), end, out);
    return ec == std::errc() && p == end && std::isfinite(out);
}

inline bool parse_long(const std::string& s, long& out) {
    const auto t = strip_plus(s);
    if (t.empty()) return false;
    const auto* end = t.data() + t.size();
    auto [p, ec] = std::from_chars(t.data(), end, out);
    return ec == std::errc() && p == end;
}

inline bool parse_list(const std::string& s, std::vector<double>& out) {
    out.clear();
    std::string tok;
    std::istringstream is(s);
    while (is >> tok) {
        if (!tok.empty() && tok.back() == ',') tok.pop_back();
        if (tok.empty()) continue;
        double v;
        if (!parse_double(tok, v)) return false;
        out.push_back(v);
    }
    return true;
}

inline std::string format_list(const std::vector<double>& v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? " " : "") + format_double(v[k]);
    return s;
}

struct Field {
    std::function<std::string(const std::string&)> set;  // "" on success, else message
    std::function<std::string()> get;
};

inline std::map<std::string, Field> config_fields(ScenarioConfig& c) {
    std::map<std::string, Field> f;
    auto num = [](double& ref) {
        return Field{[&ref](const std::string& v) { return parse_double(v, ref) ? "" : std::string("expected a number"); },
                     [&ref] { return format_double(ref); }};
    };
    auto integer = [](long& ref) {
        return Field{[&ref](const std::string& v) { return parse_long(v, ref) ? "" : std::string("expected an integer"); },
                     [&ref] { return std::to_string(ref); }};
    };
    auto text = [](std::string& ref) {
        return Field{[&ref](const std::string& v) {
                         ref = trim(v);
                         return ref.empty() ? std::string("empty value") : std::string();
                     },
                     [&ref] { return ref; }};
    };
    auto flag = [](bool& ref) {
        return Field{[&ref](const std::string& v) {
                         const auto t = trim(v);
                         if (t == "true") ref = true;
                         else if (t == "false") ref = false;
                         else return std::string("expected true or false");
                         return std::string();
                     },
                     [&ref] { return std::string(ref ? "true" : "false"); }};
    };
    auto list = [](std::vector<double>& ref) {
        return Field{[&ref](const std::string& v) { return parse_list(v, ref) ? "" : std::string("expected a list of numbers"); },
                     [&ref] { return format_list(ref); }};
    };
    f["name"] = text(c.name);
    f["model.type"] = text(c.model_type);
    f["model.m_S"] = num(c.m_S);
    f["model.m_E"] = num(c.m_E);
    f["model.omega"] = num(c.omega);
    f["model.C"] = num(c.C);
    f["model.potential"] = text(c.potential);
    f["model.omega_S"] = num(c.omega_S);
    f["bath.type"] = text(c.bath_type);
    f["bath.N"] = integer(c.bath_N);
    f["bath.omega_cutoff"] = num(c.omega_cutoff);
    f["bath.eta"] = num(c.eta);
    f["bath.coupling_sign"] = integer(c.coupling_sign);
    f["bath.oscillators"] = list(c.oscillators);
    f["state.temperature"] = num(c.temperature);
    f["state.open_mass"] = num(c.open_mass);
    f["state.open_frequency"] = num(c.open_frequency);
    f["state.alpha_S"] = list(c.alpha_S);
    f["state.beta_S"] = list(c.beta_S);
    f["state.alpha_CM"] = list(c.alpha_CM);
    f["state.beta_CM"] = list(c.beta_CM);
    f["decomposition.structures"] = text(c.structures);
    f["decomposition.family"] = text(c.family);
    f["decomposition.allow_positivity_violation"] = flag(c.allow_positivity_violation);
    f["decomposition.allow_rescale"] = flag(c.allow_rescale);
    f["time.grid"] = list(c.time_grid);
    f["time.start"] = num(c.time_start);
    f["time.stop"] = num(c.time_stop);
    f["time.step"] = num(c.time_step);
    f["oracle.cutoff_S"] = integer(c.cutoff_S);
    f["oracle.cutoff_E"] = integer(c.cutoff_E);
    f["oracle.cutoff_CM"] = integer(c.cutoff_CM);
    f["oracle.cutoff_R"] = integer(c.cutoff_R);
    f["master.variant"] = text(c.master_variant);
    f["master.lambda"] = num(c.master_lambda);
    f["master.cutoff"] = integer(c.master_cutoff);
    f["master.mass"] = num(c.master_mass);
    f["master.omega"] = num(c.master_omega);
    f["master.x0"] = num(c.master_x0);
    f["master.step"] = num(c.master_step);
    f["master.corotate"] = flag(c.master_corotate);
    f["output.dir"] = text(c.output_dir);
    f["run.seed"] = integer(c.seed);
    return f;
}

// Emission order; also the documented key list.
inline const std::vector<std::string>& config_key_order() {
    static const std::vector<std::string> keys{
        "name",
        "model.type", "model.m_S", "model.m_E", "model.omega", "model.C", "model.potential", "model.omega_S",
        "bath.type", "bath.N", "bath.omega_cutoff", "bath.eta", "bath.coupling_sign", "bath.oscillators",
        "state.temperature", "state.open_mass", "state.open_frequency", "state.alpha_S", "state.beta_S",
        "state.alpha_CM", "state.beta_CM",
        "decomposition.structures", "decomposition.family", "decomposition.allow_positivity_violation",
        "decomposition.allow_rescale",
        "time.grid", "time.start", "time.stop", "time.step",
        "oracle.cutoff_S", "oracle.cutoff_E", "oracle.cutoff_CM", "oracle.cutoff_R",
        "master.variant", "master.lambda", "master.cutoff", "master.mass", "master.omega", "master.x0",
        "master.step", "master.corotate",
        "output.dir", "run.seed"};
    return keys;
}

inline void validate_config(const ScenarioConfig& c, const std::set<std::string>& given, std::vector<std::string>& errors) {
    auto check = [&](const char* what, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            errors.push_back(std::string(what) + ": " + e.what());
        }
    };
    if (!given.count("model.type")) {
        errors.push_back("missing required key 'model.type'");
        return;
    }
    const bool two = c.model_type == "two_mode";
    const bool cl = c.model_type == "caldeira_leggett";
    const bool me = c.model_type == "master_equation";
    if (!two && !cl && !me)
        errors.push_back("model.type: unknown model '" + c.model_type + "' (expected two_mode | caldeira_leggett | master_equation)");

    if (given.count("time.grid")) {
        if (c.time_grid.empty()) errors.push_back("time.grid: empty list");
        for (std::size_t k = 1; k < c.time_grid.size(); ++k)
            if (c.time_grid[k] < c.time_grid[k - 1]) {
                errors.push_back("time.grid: must be non-decreasing");
                break;
            }
        if (given.count("time.start") || given.count("time.stop") || given.count("time.step"))
            errors.push_back("time: give either time.grid or time.start/stop/step, not both");
    } else {
        if (!given.count("time.stop")) errors.push_back("missing required key 'time.stop' (or 'time.grid')");
        if (!given.count("time.step")) errors.push_back("missing required key 'time.step' (or 'time.grid')");
        if (given.count("time.stop") && given.count("time.step")) {
            if (!(c.time_step > 0.0)) errors.push_back("time.step: must be positive");
            else if (!(c.time_stop >= c.time_start)) errors.push_back("time.stop: must be >= time.start");
            else if ((c.time_stop - c.time_start) / c.time_step > 1e6) errors.push_back("time: more than 1e6 grid points");
        }
    }
    if (c.time_start < 0.0) errors.push_back("time.start: must be >= 0");

    if (two) check("model", [&] { c.two_mode().validate(); });
    if (cl) {
        if (c.potential != "free" && c.potential != "harmonic")
            errors.push_back("model.potential: expected free | harmonic, got '" + c.potential + "'");
        if (!(c.m_S > 0.0)) errors.push_back("model.m_S: must be positive");
        if (c.potential == "harmonic" && !(c.omega_S > 0.0)) errors.push_back("model.omega_S: must be positive");
        if (c.bath_type != "ohmic" && c.bath_type != "explicit")
            errors.push_back("bath.type: expected ohmic | explicit, got '" + c.bath_type + "'");
        if (c.bath_type == "explicit" && (c.oscillators.empty() || c.oscillators.size() % 3 != 0))
            errors.push_back("bath.oscillators: expected a non-empty list of (mass frequency kappa) triples");
        if (c.bath_type == "ohmic" && c.bath_N < 1) errors.push_back("bath.N: must be >= 1");
        if (c.coupling_sign != 1 && c.coupling_sign != -1) errors.push_back("bath.coupling_sign: must be +1 or -1");
        else if (c.bath_type == "ohmic" || c.oscillators.size() % 3 == 0) check("bath", [&] { c.bath().validate(); });
    }
    if (two || cl) {
        if (c.temperature < 0.0) errors.push_back("state.temperature: must be >= 0");
        if (c.open_mass < 0.0 || c.open_frequency < 0.0) errors.push_back("state.open_*: must be positive when given");
        for (auto* p : {&c.alpha_S, &c.beta_S, &c.alpha_CM, &c.beta_CM})
            if (p->size() != 2) {
                errors.push_back("state amplitudes must be 'x0 p0' pairs");
                break;
            }
        if (c.structures != "original" && c.structures != "cm_relative" && c.structures != "both")
            errors.push_back("decomposition.structures: expected original | cm_relative | both");
        check("decomposition.family", [&] { relative_family_from_string(c.family); });
    }
    if (me) {
        check("master.variant", [&] { master_hamiltonian_from_string(c.master_variant); });
        if (c.master_lambda < 0.0) errors.push_back("master.lambda: must be >= 0");
        if (c.master_cutoff < 2) errors.push_back("master.cutoff: must be >= 2");
        if (!(c.master_mass > 0.0) || !(c.master_omega > 0.0)) errors.push_back("master.mass/omega: must be positive");
        if (!(c.master_step > 0.0)) errors.push_back("master.step: must be positive");
    }
    for (auto k : {c.cutoff_S, c.cutoff_E, c.cutoff_CM, c.cutoff_R})
        if (k < 2) {
            errors.push_back("oracle cutoffs must be >= 2");
            break;
        }
}

}  // namespace detail

inline ScenarioConfig parse_config(const std::string& text) {
    ScenarioConfig c;
    auto fields = detail::config_fields(c);
    std::vector<std::string> errors;
    std::set<std::string> given;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = "line " + std::to_string(lineno);
        if (eq == std::string::npos) {
            errors.push_back(where + ": expected 'key = value'");
            continue;
        }
        const auto key = detail::trim(line.substr(0, eq));
        const auto value = line.substr(eq + 1);
        const auto it = fields.find(key);
        if (it == fields.end()) {
            errors.push_back(where + ": unknown key '" + key + "'");
            continue;
        }
        if (!given.insert(key).second) {
            errors.push_back(where + ": duplicate key '" + key + "'");
            continue;
        }
        const auto msg = it->second.set(value);
        if (!msg.empty()) errors.push_back(where + ": " + key + ": " + msg);
    }
    detail::validate_config(c, given, errors);
    if (!errors.empty()) throw ConfigError(errors);
    return c;
}

/// Canonical text of the resolved config. Only one of time.grid and
/// time.start/stop/step is written, matching what was parsed.
inline std::string emit_config(const ScenarioConfig& cfg) {
    ScenarioConfig c = cfg;
    auto fields = detail::config_fields(c);
    std::string out;
    for (const auto& k : detail::config_key_order()) {
        const bool grid_key = k == "time.grid";
        const bool range_key = k == "time.start" || k == "time.stop" || k == "time.step";
        if (grid_key && c.time_grid.empty()) continue;
        if (range_key && !c.time_grid.empty()) continue;
        if ((k == "bath.oscillators") && c.oscillators.empty()) continue;
        out += k + " = " + fields.at(k).get() + "\n";
    }
    return out;
}

}  // namespace pardec
