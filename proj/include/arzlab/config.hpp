#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "arzlab/model.hpp"
#include "arzlab/simulator.hpp"

namespace arzlab {

class ParseError : public std::runtime_error {
  public:
    ParseError(int line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_no(line) {}
    int line_no;
};

class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class GainFamily { Zero, Constant, Gaussian, Table };

/// A fully parsed run description. Everything has a documented default
/// except the five model parameters and the equilibrium speed.
struct Scenario {
    ModelParams params{};
    double v_star = 0.0;

    GainFamily gain_family = GainFamily::Zero;
    double gain_amplitude = 0.0;
    double gain_center = 0.0;
    double gain_width = 0.0;
    std::vector<std::pair<double, double>> gain_table;

    InitialProfile initial{};
    SimConfig sim{};
    double k3 = 1.0;

    std::optional<double> lyap_delta1, lyap_delta2, lyap_delta3, lyap_delta4;
    std::optional<double> lyap_d1, lyap_d2;

    std::string out_dir = "out";
    bool strict_admissibility = false;

    friend bool operator==(const Scenario&, const Scenario&) = default;

    [[nodiscard]] RoutingGain make_gain(const Equilibrium& eq) const {
        switch (gain_family) {
            case GainFamily::Zero:
                return zero_gain(eq, sim.n_cells, params.L);
            case GainFamily::Constant:
                return constant_gain(gain_amplitude, eq, sim.n_cells, params.L);
            case GainFamily::Gaussian:
                return gaussian_gain(gain_amplitude, gain_center, gain_width, eq,
                                     sim.n_cells, params.L);
            case GainFamily::Table:
                return table_gain(gain_table, eq, sim.n_cells, params.L);
        }
        throw std::logic_error("unreachable gain family");
    }

    [[nodiscard]] LyapunovSpec make_lyapunov(const Equilibrium& eq) const {
        LyapunovSpec s = LyapunovSpec::defaults(eq, params.L);
        if (lyap_delta1) s.delta1 = *lyap_delta1;
        if (lyap_delta2) s.delta2 = *lyap_delta2;
        if (lyap_delta3) s.delta3 = *lyap_delta3;
        if (lyap_delta4) s.delta4 = *lyap_delta4;
        if (lyap_d1) s.d1 = *lyap_d1;
        if (lyap_d2) s.d2 = *lyap_d2;
        return s;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_number(const std::string& v, int line) {
    const std::string t = trim(v);
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(t, &used);
    } catch (const std::exception&) {
        throw ParseError(line, "malformed numeric value '" + v + "'");
    }
    if (used != t.size()) throw ParseError(line, "malformed numeric value '" + v + "'");
    return out;
}

inline int parse_int(const std::string& v, int line) {
    const double d = parse_number(v, line);
    const int i = static_cast<int>(d);
    if (static_cast<double>(i) != d) throw ParseError(line, "expected an integer, got '" + v + "'");
    return i;
}

inline bool parse_bool(const std::string& v, int line) {
    const std::string t = trim(v);
    if (t == "on" || t == "true" || t == "1") return true;
    if (t == "off" || t == "false" || t == "0") return false;
    throw ParseError(line, "expected on/off, got '" + v + "'");
}

inline std::vector<std::pair<double, double>> parse_points(const std::string& v, int line) {
    std::vector<std::pair<double, double>> pts;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos)
            throw ParseError(line, "table points must be 'position:value' pairs");
        pts.emplace_back(parse_number(item.substr(0, colon), line),
                         parse_number(item.substr(colon + 1), line));
    }
    if (pts.size() < 2) throw ParseError(line, "table gain needs at least two points");
    return pts;
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Parse the line-oriented `key = value` format with [section] headers and
/// '#' comments. Unknown sections or keys are rejected with their line
/// number; semantic violations (positivity, the congestion condition) raise
/// ValidationError naming the violated invariant.
inline Scenario parse_config_text(const std::string& text) {
    Scenario sc;
    bool have_params[6] = {false, false, false, false, false, false};
    std::string section;
    std::istringstream in(text);
    std::string raw;
    int line = 0;

    while (std::getline(in, raw)) {
        ++line;
        std::string s = raw;
        const auto hash = s.find('#');
        if (hash != std::string::npos) s = s.substr(0, hash);
        s = detail::trim(s);
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ParseError(line, "unterminated section header");
            section = detail::trim(s.substr(1, s.size() - 2));
            if (section != "model" && section != "routing" && section != "initial" &&
                section != "sim" && section != "control" && section != "lyapunov" &&
                section != "output")
                throw ParseError(line, "unknown section [" + section + "]");
            continue;
        }
        const auto eqpos = s.find('=');
        if (eqpos == std::string::npos) throw ParseError(line, "expected 'key = value'");
        const std::string key = detail::trim(s.substr(0, eqpos));
        const std::string val = detail::trim(s.substr(eqpos + 1));
        if (section.empty()) throw ParseError(line, "key '" + key + "' outside any section");

        auto unknown = [&]() -> ParseError {
            return ParseError(line, "unknown key '" + key + "' in section [" + section + "]");
        };

        if (section == "model") {
            if (key == "v_f") { sc.params.v_f = detail::parse_number(val, line); have_params[0] = true; }
            else if (key == "rho_m") { sc.params.rho_m = detail::parse_number(val, line); have_params[1] = true; }
            else if (key == "gamma") { sc.params.gamma = detail::parse_number(val, line); have_params[2] = true; }
            else if (key == "tau") { sc.params.tau = detail::parse_number(val, line); have_params[3] = true; }
            else if (key == "length") { sc.params.L = detail::parse_number(val, line); have_params[4] = true; }
            else if (key == "v_star") { sc.v_star = detail::parse_number(val, line); have_params[5] = true; }
            else throw unknown();
        } else if (section == "routing") {
            if (key == "family") {
                if (val == "zero") sc.gain_family = GainFamily::Zero;
                else if (val == "constant") sc.gain_family = GainFamily::Constant;
                else if (val == "gaussian") sc.gain_family = GainFamily::Gaussian;
                else if (val == "table") sc.gain_family = GainFamily::Table;
                else throw ParseError(line, "unknown routing family '" + val + "'");
            } else if (key == "amplitude") sc.gain_amplitude = detail::parse_number(val, line);
            else if (key == "center") sc.gain_center = detail::parse_number(val, line);
            else if (key == "width") sc.gain_width = detail::parse_number(val, line);
            else if (key == "points") sc.gain_table = detail::parse_points(val, line);
            else throw unknown();
        } else if (section == "initial") {
            if (key == "w_profile") sc.initial.w_shape = profile_shape_from_string(val);
            else if (key == "v_profile") sc.initial.v_shape = profile_shape_from_string(val);
            else if (key == "w_amplitude") sc.initial.w_amplitude = detail::parse_number(val, line);
            else if (key == "v_amplitude") sc.initial.v_amplitude = detail::parse_number(val, line);
            else if (key == "center") sc.initial.center = detail::parse_number(val, line);
            else if (key == "width") sc.initial.width = detail::parse_number(val, line);
            else throw unknown();
        } else if (section == "sim") {
            if (key == "grid_n") sc.sim.n_cells = detail::parse_int(val, line);
            else if (key == "cfl") sc.sim.cfl = detail::parse_number(val, line);
            else if (key == "t_final") sc.sim.t_final = detail::parse_number(val, line);
            else if (key == "record_every") sc.sim.record_every = detail::parse_int(val, line);
            else if (key == "controller") sc.sim.controller_on = detail::parse_bool(val, line);
            else if (key == "routing_feedback") sc.sim.routing_on = detail::parse_bool(val, line);
            else if (key == "strict_admissibility") sc.strict_admissibility = detail::parse_bool(val, line);
            else throw unknown();
        } else if (section == "control") {
            if (key == "k3") sc.k3 = detail::parse_number(val, line);
            else throw unknown();
        } else if (section == "lyapunov") {
            if (key == "delta1") sc.lyap_delta1 = detail::parse_number(val, line);
            else if (key == "delta2") sc.lyap_delta2 = detail::parse_number(val, line);
            else if (key == "delta3") sc.lyap_delta3 = detail::parse_number(val, line);
            else if (key == "delta4") sc.lyap_delta4 = detail::parse_number(val, line);
            else if (key == "d1") sc.lyap_d1 = detail::parse_number(val, line);
            else if (key == "d2") sc.lyap_d2 = detail::parse_number(val, line);
            else throw unknown();
        } else if (section == "output") {
            if (key == "dir") sc.out_dir = val;
            else throw unknown();
        }
    }

    for (bool have : have_params)
        if (!have)
            throw ValidationError(
                "incomplete [model] section: v_f, rho_m, gamma, tau, length, v_star are required");

    sc.params.validate();
    if (!(sc.v_star > 0.0) || !(sc.v_star < sc.params.v_f))
        throw ValidationError("equilibrium speed must satisfy 0 < v_star < v_f");
    const Equilibrium eq = compute_equilibrium(sc.params, sc.v_star);
    if (!check_congestion(eq, sc.params)) {
        const double threshold = sc.params.gamma / (sc.params.gamma + 1.0) * sc.params.v_f;
        throw ValidationError(
            "v_star = " + std::to_string(sc.v_star) +
            " violates the congestion condition 0 < v* < gamma/(gamma+1) v_f = " +
            std::to_string(threshold));
    }
    sc.sim.validate();
    if (!(sc.k3 > 0.0)) throw ValidationError("k3 must be positive");
    if (sc.gain_family == GainFamily::Gaussian && !(sc.gain_width > 0.0))
        throw ValidationError("gaussian routing gain requires width > 0");
    if (sc.gain_family == GainFamily::Table && sc.gain_table.size() < 2)
        throw ValidationError("table routing gain requires at least two points");
    return sc;
}

inline Scenario parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

/// Serialize every field (defaults included) so the text re-parses to an
/// equal Scenario.
inline std::string to_config_text(const Scenario& sc) {
    using detail::fmt;
    std::ostringstream out;
    out << "[model]\n";
    out << "v_f = " << fmt(sc.params.v_f) << "\n";
    out << "rho_m = " << fmt(sc.params.rho_m) << "\n";
    out << "gamma = " << fmt(sc.params.gamma) << "\n";
    out << "tau = " << fmt(sc.params.tau) << "\n";
    out << "length = " << fmt(sc.params.L) << "\n";
    out << "v_star = " << fmt(sc.v_star) << "\n";
    out << "\n[routing]\n";
    switch (sc.gain_family) {
        case GainFamily::Zero: out << "family = zero\n"; break;
        case GainFamily::Constant: out << "family = constant\n"; break;
        case GainFamily::Gaussian: out << "family = gaussian\n"; break;
        case GainFamily::Table: out << "family = table\n"; break;
    }
    out << "amplitude = " << fmt(sc.gain_amplitude) << "\n";
    out << "center = " << fmt(sc.gain_center) << "\n";
    out << "width = " << fmt(sc.gain_width) << "\n";
    if (!sc.gain_table.empty()) {
        out << "points = ";
        for (std::size_t i = 0; i < sc.gain_table.size(); ++i) {
            if (i) out << ", ";
            out << fmt(sc.gain_table[i].first) << ":" << fmt(sc.gain_table[i].second);
        }
        out << "\n";
    }
    auto shape_name = [](ProfileShape s) {
        switch (s) {
            case ProfileShape::Zero: return "zero";
            case ProfileShape::Sine: return "sine";
            case ProfileShape::Gaussian: return "gaussian";
        }
        return "zero";
    };
    out << "\n[initial]\n";
    out << "w_profile = " << shape_name(sc.initial.w_shape) << "\n";
    out << "w_amplitude = " << fmt(sc.initial.w_amplitude) << "\n";
    out << "v_profile = " << shape_name(sc.initial.v_shape) << "\n";
    out << "v_amplitude = " << fmt(sc.initial.v_amplitude) << "\n";
    out << "center = " << fmt(sc.initial.center) << "\n";
    out << "width = " << fmt(sc.initial.width) << "\n";
    out << "\n[sim]\n";
    out << "grid_n = " << sc.sim.n_cells << "\n";
    out << "cfl = " << fmt(sc.sim.cfl) << "\n";
    out << "t_final = " << fmt(sc.sim.t_final) << "\n";
    out << "record_every = " << sc.sim.record_every << "\n";
    out << "controller = " << (sc.sim.controller_on ? "on" : "off") << "\n";
    out << "routing_feedback = " << (sc.sim.routing_on ? "on" : "off") << "\n";
    out << "strict_admissibility = " << (sc.strict_admissibility ? "on" : "off") << "\n";
    out << "\n[control]\n";
    out << "k3 = " << fmt(sc.k3) << "\n";
    out << "\n[lyapunov]\n";
    if (sc.lyap_delta1) out << "delta1 = " << fmt(*sc.lyap_delta1) << "\n";
    if (sc.lyap_delta2) out << "delta2 = " << fmt(*sc.lyap_delta2) << "\n";
    if (sc.lyap_delta3) out << "delta3 = " << fmt(*sc.lyap_delta3) << "\n";
    if (sc.lyap_delta4) out << "delta4 = " << fmt(*sc.lyap_delta4) << "\n";
    if (sc.lyap_d1) out << "d1 = " << fmt(*sc.lyap_d1) << "\n";
    if (sc.lyap_d2) out << "d2 = " << fmt(*sc.lyap_d2) << "\n";
    out << "\n[output]\n";
    out << "dir = " << sc.out_dir << "\n";
    return out.str();
}

}  // namespace arzlab
