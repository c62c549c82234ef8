#pragma once

// File formats: network, areas, scenario, sweep and suite documents are JSON
// with versioned schemas.  Unknown keys are rejected so a scenario file that
// drifts from the toolkit version fails loudly instead of silently changing
// results.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fidvr/load_model.hpp"
#include "fidvr/network.hpp"
#include "fidvr/simulation.hpp"
#include "fidvr/types.hpp"

namespace fidvr {

using Json = nlohmann::json;

namespace schema {

inline Json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    Json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw InputError("parse error in " + path + ": " + e.what());
    }
    return j;
}

inline void check_keys(const Json& j, const std::string& where,
                       const std::set<std::string>& allowed) {
    if (!j.is_object()) throw InputError(where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw InputError("unknown key '" + it.key() + "' in " + where);
}

inline void check_version(const Json& j, const std::string& where, int expected = 1) {
    if (!j.contains("version"))
        throw InputError(where + " is missing the 'version' field");
    if (j.at("version").get<int>() != expected)
        throw InputError(where + " has unsupported version");
}

template <typename T>
T require(const Json& j, const std::string& where, const std::string& key) {
    if (!j.contains(key)) throw InputError(where + " is missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const std::exception&) {
        throw InputError("field '" + key + "' in " + where + " has the wrong type");
    }
}

template <typename T>
T optional(const Json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

}  // namespace schema

// ---------------------------------------------------------------------------
// network file
// ---------------------------------------------------------------------------

inline FeederNetwork load_network(const std::string& path) {
    const Json j = schema::load_json_file(path);
    schema::check_keys(j, "network file", {"version", "base_mva", "source", "buses", "branches"});
    schema::check_version(j, "network file");

    FeederNetwork net;
    net.base_mva = schema::require<double>(j, "network file", "base_mva");

    const Json& src = j.at("source");
    schema::check_keys(src, "source", {"emf_pu", "r_pu", "x_pu"});
    net.source.emf = Complex(schema::require<double>(src, "source", "emf_pu"), 0.0);
    net.source.impedance = Complex(schema::require<double>(src, "source", "r_pu"),
                                   schema::require<double>(src, "source", "x_pu"));

    for (const Json& bj : j.at("buses")) {
        schema::check_keys(bj, "bus", {"id", "base_kv", "is_source"});
        Bus b;
        b.id = schema::require<int>(bj, "bus", "id");
        b.base_kv = schema::optional<double>(bj, "base_kv", 1.0);
        b.is_source = schema::optional<bool>(bj, "is_source", false);
        net.buses.push_back(b);
    }
    for (const Json& brj : j.at("branches")) {
        schema::check_keys(brj, "branch", {"from", "to", "r_pu", "x_pu", "b_pu"});
        Branch br;
        br.from = schema::require<int>(brj, "branch", "from");
        br.to = schema::require<int>(brj, "branch", "to");
        br.impedance = Complex(schema::require<double>(brj, "branch", "r_pu"),
                               schema::require<double>(brj, "branch", "x_pu"));
        br.shunt_b = schema::optional<double>(brj, "b_pu", 0.0);
        net.branches.push_back(br);
    }
    validate_network(net);
    return net;
}

// ---------------------------------------------------------------------------
// areas file
// ---------------------------------------------------------------------------

namespace schema {

inline void merge_motor1(Motor1PhaseParameters& m, const Json& j, const std::string& where) {
    check_keys(j, where,
               {"v_stall", "t_stall", "r_stall", "x_stall", "t_th", "theta1", "theta2",
                "p_nom", "q_nom"});
    m.v_stall = optional(j, "v_stall", m.v_stall);
    m.t_stall = optional(j, "t_stall", m.t_stall);
    m.r_stall = optional(j, "r_stall", m.r_stall);
    m.x_stall = optional(j, "x_stall", m.x_stall);
    m.t_th = optional(j, "t_th", m.t_th);
    m.theta1 = optional(j, "theta1", m.theta1);
    m.theta2 = optional(j, "theta2", m.theta2);
    m.p_nom = optional(j, "p_nom", m.p_nom);
    m.q_nom = optional(j, "q_nom", m.q_nom);
}

inline void merge_motor3(Motor3PhaseParameters& m, const Json& j, const std::string& where) {
    check_keys(j, where,
               {"r_s", "x_ls", "x_m", "r_r", "x_lr", "h", "load_torque_exponent", "r_r2", "x_lr2"});
    m.r_s = optional(j, "r_s", m.r_s);
    m.x_ls = optional(j, "x_ls", m.x_ls);
    m.x_m = optional(j, "x_m", m.x_m);
    m.r_r = optional(j, "r_r", m.r_r);
    m.x_lr = optional(j, "x_lr", m.x_lr);
    m.h = optional(j, "h", m.h);
    m.load_torque_exponent = optional(j, "load_torque_exponent", m.load_torque_exponent);
    m.r_r2 = optional(j, "r_r2", m.r_r2);
    m.x_lr2 = optional(j, "x_lr2", m.x_lr2);
}

inline void merge_zip(ZipParameters& z, const Json& j, const std::string& where) {
    check_keys(j, where, {"p_z0", "p_i0", "p_p0", "q_z0", "q_i0", "q_p0", "q_sh0"});
    z.p_z0 = optional(j, "p_z0", z.p_z0);
    z.p_i0 = optional(j, "p_i0", z.p_i0);
    z.p_p0 = optional(j, "p_p0", z.p_p0);
    z.q_z0 = optional(j, "q_z0", z.q_z0);
    z.q_i0 = optional(j, "q_i0", z.q_i0);
    z.q_p0 = optional(j, "q_p0", z.q_p0);
    z.q_sh0 = optional(j, "q_sh0", z.q_sh0);
}

inline void merge_area_definition(AreaDefinition& area, const Json& aj, const std::string& where,
                                  bool allow_structure) {
    std::set<std::string> keys = {"motor1", "motor3", "zip", "static_pf", "pv",
                                  "comp_sigma", "param_sigma", "composition"};
    if (allow_structure) {
        keys.insert("id");
        keys.insert("root_node");
        keys.insert("members");
    } else {
        keys.insert("id");
    }
    check_keys(aj, where, keys);
    if (aj.contains("composition")) {
        const Json& cj = aj.at("composition");
        check_keys(cj, where + ".composition", {"f_s", "f_el", "f_m1", "f_m3"});
        area.mean_fractions.f_s = optional(cj, "f_s", area.mean_fractions.f_s);
        area.mean_fractions.f_el = optional(cj, "f_el", area.mean_fractions.f_el);
        area.mean_fractions.f_m1 = optional(cj, "f_m1", area.mean_fractions.f_m1);
        area.mean_fractions.f_m3 = optional(cj, "f_m3", area.mean_fractions.f_m3);
    }
    if (aj.contains("motor1")) merge_motor1(area.m1, aj.at("motor1"), where + ".motor1");
    if (aj.contains("motor3")) merge_motor3(area.m3, aj.at("motor3"), where + ".motor3");
    if (aj.contains("zip")) merge_zip(area.zip, aj.at("zip"), where + ".zip");
    area.static_pf = optional(aj, "static_pf", area.static_pf);
    area.comp_sigma = optional(aj, "comp_sigma", area.comp_sigma);
    area.param_sigma = optional(aj, "param_sigma", area.param_sigma);
    if (aj.contains("pv")) {
        const Json& pj = aj.at("pv");
        check_keys(pj, where + ".pv", {"sizing_frac", "output_frac", "q_max_frac"});
        area.pv_sizing_frac = optional(pj, "sizing_frac", area.pv_sizing_frac);
        area.pv_output_frac = optional(pj, "output_frac", area.pv_output_frac);
        area.pv_q_max_frac = optional(pj, "q_max_frac", area.pv_q_max_frac);
    }
}

}  // namespace schema

inline std::vector<AreaDefinition> load_areas(const std::string& path) {
    const Json j = schema::load_json_file(path);
    schema::check_keys(j, "areas file", {"version", "defaults", "areas"});
    schema::check_version(j, "areas file");

    AreaDefinition defaults;
    if (j.contains("defaults"))
        schema::merge_area_definition(defaults, j.at("defaults"), "defaults", false);

    std::vector<AreaDefinition> areas;
    for (const Json& aj : j.at("areas")) {
        AreaDefinition area = defaults;
        area.id = schema::require<std::string>(aj, "area", "id");
        area.root_bus = schema::require<int>(aj, "area", "root_node");
        for (const Json& mj : aj.at("members")) {
            schema::check_keys(mj, "member", {"bus", "p_kw"});
            area.member_loads.emplace_back(schema::require<int>(mj, "member", "bus"),
                                           schema::require<double>(mj, "member", "p_kw"));
        }
        schema::merge_area_definition(area, aj, "area " + area.id, true);
        const auto& f = area.mean_fractions;
        if (std::abs(f.f_s + f.f_el + f.f_m1 + f.f_m3 - 1.0) > 1e-6)
            throw InputError("area " + area.id + " composition fractions must sum to 1");
        areas.push_back(std::move(area));
    }
    return areas;
}

// ---------------------------------------------------------------------------
// scenario file
// ---------------------------------------------------------------------------

struct ScenarioFile {
    FaultScenario fault;
    SimConfig sim;
    Json area_overrides;  // optional array merged over the areas file
};

inline FaultScenario parse_fault(const Json& fj, const std::string& where) {
    schema::check_keys(fj, where, {"bus", "start_s", "duration_s", "g_shunt_pu", "b_shunt_pu"});
    FaultScenario fault;
    fault.bus = schema::require<int>(fj, where, "bus");
    fault.start = schema::optional<double>(fj, "start_s", 1.0);
    fault.duration = schema::require<double>(fj, where, "duration_s");
    fault.fault_shunt = Complex(schema::optional<double>(fj, "g_shunt_pu", 1e4),
                                schema::optional<double>(fj, "b_shunt_pu", 0.0));
    validate(fault);
    return fault;
}

inline SimConfig parse_sim_config(const Json& sj, const std::string& where) {
    schema::check_keys(sj, where, {"dt_s", "horizon_s", "seed", "report_hz"});
    SimConfig cfg;
    cfg.dt = schema::optional<double>(sj, "dt_s", cfg.dt);
    cfg.horizon = schema::optional<double>(sj, "horizon_s", cfg.horizon);
    cfg.seed = schema::optional<std::uint64_t>(sj, "seed", cfg.seed);
    cfg.report_hz = schema::optional<double>(sj, "report_hz", cfg.report_hz);
    if (cfg.dt <= 0.0 || cfg.horizon <= 0.0) throw InputError(where + ": dt and horizon must be positive");
    return cfg;
}

inline ScenarioFile load_scenario(const std::string& path) {
    const Json j = schema::load_json_file(path);
    schema::check_keys(j, "scenario file", {"version", "fault", "sim", "areas"});
    schema::check_version(j, "scenario file");
    ScenarioFile s;
    s.fault = parse_fault(j.at("fault"), "fault");
    if (j.contains("sim")) s.sim = parse_sim_config(j.at("sim"), "sim");
    if (j.contains("areas")) s.area_overrides = j.at("areas");
    return s;
}

/// Applies the scenario file's per-area overrides on top of the areas file.
inline std::vector<AreaDefinition> apply_area_overrides(std::vector<AreaDefinition> areas,
                                                        const Json& overrides) {
    if (overrides.is_null()) return areas;
    for (const Json& oj : overrides) {
        const std::string id = schema::require<std::string>(oj, "area override", "id");
        bool found = false;
        for (auto& area : areas) {
            if (area.id != id) continue;
            schema::merge_area_definition(area, oj, "override " + id, false);
            found = true;
        }
        if (!found) throw InputError("area override names unknown area " + id);
    }
    return areas;
}

// ---------------------------------------------------------------------------
// digests and run manifest
// ---------------------------------------------------------------------------

/// FNV-1a 64-bit content hash, printed as 16 hex digits.
inline std::string content_digest(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path + " for digest");
    std::ostringstream ss;
    ss << in.rdbuf();
    return content_digest(ss.str());
}

inline constexpr const char* kToolkitVersion = "0.1.0";

struct RunManifest {
    std::string command;
    std::vector<std::pair<std::string, std::string>> inputs;   // path, digest
    std::vector<std::pair<std::string, std::string>> outputs;  // path, digest
    std::uint64_t seed = 0;
    double wall_seconds = 0.0;

    Json to_json() const {
        Json j;
        j["version"] = 1;
        j["toolkit_version"] = kToolkitVersion;
        j["command"] = command;
        j["seed"] = seed;
        j["wall_seconds"] = wall_seconds;
        j["inputs"] = Json::object();
        for (const auto& [p, d] : inputs) j["inputs"][p] = d;
        j["outputs"] = Json::object();
        for (const auto& [p, d] : outputs) j["outputs"][p] = d;
        return j;
    }
};

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open " + path + " for writing");
    out << text;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace fidvr
