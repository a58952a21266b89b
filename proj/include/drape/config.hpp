#pragma once

// Run configuration: a plain-text "key = value" file with [section]
// headers, overridable by repeated --set section.key=value flags. Every key
// is declared in a registry with a default and a unit-carrying description;
// unknown keys are rejected so typos fail loudly. Each command writes the
// fully resolved configuration next to its outputs.

#include "drape/common.hpp"
#include "drape/energy.hpp"
#include "drape/skinning.hpp"
#include "drape/solver.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace drape {

struct ConfigKey {
    std::string key;
    std::string default_value;
    std::string description; // includes units
};

inline const std::vector<ConfigKey>& config_registry() {
    static const std::vector<ConfigKey> keys = {
        {"paths.garment", "", "garment template OBJ file"},
        {"paths.body", "", "body description file (mesh + joints + weights); optional"},
        {"paths.poses", "", "pose sequence file, one frame per line; optional"},
        {"paths.output", "out", "output directory"},
        {"paths.rest_cache", "", "rest-state cache file (written by precompute, read if present)"},
        {"paths.weight_cache", "", "garment weight cache file (written by weights, read if present)"},
        {"paths.alpha_override", "", "per-edge bending balance override file 'v0 v1 alpha'; optional"},
        {"material.youngs_modulus", "5000", "membrane Young's modulus [Pa*m]"},
        {"material.poisson_ratio", "0.25", "Poisson ratio [-]"},
        {"material.areal_density", "0.2", "cloth areal density [kg/m^2]"},
        {"material.bending_stiffness", "1e-5", "bending stiffness k_b [J]"},
        {"collision.stiffness", "1000", "collision penalty k_c [J/m^3]"},
        {"collision.margin", "0.004", "collision margin epsilon [m]"},
        {"inext.weight", "2e8", "inextensibility weight k_i [-]"},
        {"inext.ramp_rate", "10", "extension ramp rate multiplying penetration depth [1/m]"},
        {"inext.ramp_clamp", "0.03", "cap on the per-vertex ramp slope [-]"},
        {"inext.ramp_cap", "100", "cap on the ramp counter [-]"},
        {"inext.closed_rings", "true", "include the center vertex in one-rings [true|false]"},
        {"dynamics.gravity", "0 0 -9.81", "gravity vector [m/s^2]"},
        {"dynamics.timestep", "0.033333333333333333", "simulation time step [s]"},
        {"skinning.scheme", "rbf", "garment weight scheme [rbf|nearest|knn]"},
        {"skinning.rbf_k", "0.5", "RBF width factor k [-]"},
        {"skinning.knn_k", "4", "neighbor count for the knn scheme [-]"},
        {"solver.max_iterations", "200", "descent iterations per frame (per round in static mode)"},
        {"solver.tolerance", "1e-6", "gradient norm stopping tolerance [N]"},
        {"solver.line_search_shrink", "0.5", "backtracking factor in (0,1) [-]"},
        {"solver.line_search_slope", "1e-4", "Armijo sufficient-decrease constant [-]"},
        {"solver.max_line_search_steps", "60", "backtracking steps before giving up [-]"},
        {"solver.mode", "dynamic", "time integration mode [dynamic|static]"},
        {"solver.static_rounds", "40", "outer ramp rounds for the static drape [-]"},
        {"solver.ext_schedule", "true", "enable the extension ramp; false pins k_ext = 1"},
        {"metrics.signed_deviation", "false", "report signed instead of absolute percent deviations"},
        {"run.threads", "1", "worker threads for distance queries (DRAPE_THREADS overrides)"},
    };
    return keys;
}

inline std::string config_key_help() {
    std::ostringstream os;
    os << "Configuration keys (file sections map to key prefixes):\n";
    for (const auto& k : config_registry()) {
        os << "  " << k.key;
        if (!k.default_value.empty()) os << " = " << k.default_value;
        os << "\n      " << k.description << "\n";
    }
    return os.str();
}

class RunConfig {
public:
    static RunConfig defaults() {
        RunConfig cfg;
        for (const auto& k : config_registry()) cfg.values_[k.key] = k.default_value;
        return cfg;
    }

    static RunConfig from_file(const std::string& path) {
        RunConfig cfg = defaults();
        cfg.merge_file(path);
        return cfg;
    }

    void merge_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError(msg("cannot open config file '", path, "'"));
        std::string line, section;
        long lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            for (const char marker : {'#', ';'}) {
                const auto pos = line.find(marker);
                if (pos != std::string::npos) line.erase(pos);
            }
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            if (trimmed.front() == '[') {
                if (trimmed.back() != ']')
                    throw IoError(msg(path, ":", lineno, ": malformed section header"));
                section = trim(trimmed.substr(1, trimmed.size() - 2));
                continue;
            }
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw IoError(msg(path, ":", lineno, ": expected 'key = value'"));
            std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.find('.') == std::string::npos && !section.empty())
                key = section + "." + key;
            set(key, value);
        }
    }

    void set(const std::string& key, const std::string& value) {
        if (!known(key)) throw IoError(msg("unknown config key '", key, "'"));
        values_[key] = value;
    }

    /// Applies "section.key=value" strings from --set flags.
    void apply_overrides(const std::vector<std::string>& sets) {
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos)
                throw IoError(msg("--set expects key=value, got '", s, "'"));
            set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
        }
    }

    const std::string& get(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) throw IoError(msg("unknown config key '", key, "'"));
        return it->second;
    }

    double get_double(const std::string& key) const {
        const std::string& v = get(key);
        try {
            size_t used = 0;
            const double x = std::stod(v, &used);
            if (trim(v.substr(used)).empty()) return x;
        } catch (const std::exception&) {
        }
        throw IoError(msg("config key '", key, "' has non-numeric value '", v, "'"));
    }

    int get_int(const std::string& key) const {
        const double x = get_double(key);
        const int i = static_cast<int>(x);
        if (static_cast<double>(i) != x)
            throw IoError(msg("config key '", key, "' expects an integer"));
        return i;
    }

    bool get_bool(const std::string& key) const {
        const std::string& v = get(key);
        if (v == "true" || v == "1" || v == "on") return true;
        if (v == "false" || v == "0" || v == "off") return false;
        throw IoError(msg("config key '", key, "' expects true|false, got '", v, "'"));
    }

    Vec3 get_vec3(const std::string& key) const {
        std::istringstream ls(get(key));
        Vec3 v;
        if (!(ls >> v.x() >> v.y() >> v.z()))
            throw IoError(msg("config key '", key, "' expects three numbers"));
        std::string rest;
        if (ls >> rest)
            throw IoError(msg("config key '", key, "' has trailing tokens"));
        return v;
    }

    EnergyParams energy_params() const {
        EnergyParams p;
        p.set_elastic(get_double("material.youngs_modulus"), get_double("material.poisson_ratio"));
        p.bending_stiffness = get_double("material.bending_stiffness");
        p.areal_density = get_double("material.areal_density");
        p.collision_stiffness = get_double("collision.stiffness");
        p.collision_margin = get_double("collision.margin");
        p.inext_weight = get_double("inext.weight");
        p.ramp_rate = get_double("inext.ramp_rate");
        p.ramp_clamp = get_double("inext.ramp_clamp");
        p.ramp_cap = get_double("inext.ramp_cap");
        p.gravity = get_vec3("dynamics.gravity");
        p.timestep = get_double("dynamics.timestep");
        if (p.timestep <= 0.0) throw IoError("dynamics.timestep must be positive");
        return p;
    }

    SolverConfig solver_config() const {
        SolverConfig s;
        s.max_iterations = get_int("solver.max_iterations");
        s.gradient_tolerance = get_double("solver.tolerance");
        s.line_search_shrink = get_double("solver.line_search_shrink");
        s.line_search_slope = get_double("solver.line_search_slope");
        s.max_line_search_steps = get_int("solver.max_line_search_steps");
        s.static_rounds = get_int("solver.static_rounds");
        s.extension_schedule = get_bool("solver.ext_schedule");
        const std::string& mode = get("solver.mode");
        if (mode == "dynamic") s.mode = SolverConfig::Mode::Dynamic;
        else if (mode == "static") s.mode = SolverConfig::Mode::Static;
        else throw IoError(msg("solver.mode expects dynamic|static, got '", mode, "'"));
        s.validate();
        return s;
    }

    WeightScheme skinning_scheme() const { return weight_scheme_from_name(get("skinning.scheme")); }

    /// Materializes every typed value, so malformed numbers anywhere in the
    /// config fail before any output is touched.
    void validate_all() const {
        energy_params();
        solver_config();
        skinning_scheme();
        get_double("skinning.rbf_k");
        get_int("skinning.knn_k");
        get_bool("inext.closed_rings");
        get_bool("metrics.signed_deviation");
        get_int("run.threads");
    }

    void write_resolved(const std::string& path) const {
        std::FILE* out = std::fopen(path.c_str(), "wb");
        if (!out) throw IoError(msg("cannot open '", path, "' for writing"));
        for (const auto& [key, value] : values_)
            std::fprintf(out, "%s = %s\n", key.c_str(), value.c_str());
        if (std::fclose(out) != 0) throw IoError(msg("write failure on '", path, "'"));
    }

private:
    std::map<std::string, std::string> values_; // sorted: resolved dump is canonical

    static bool known(const std::string& key) {
        for (const auto& k : config_registry())
            if (k.key == key) return true;
        return false;
    }

    static std::string trim(const std::string& s) {
        const auto begin = s.find_first_not_of(" \t\r\n");
        if (begin == std::string::npos) return "";
        const auto end = s.find_last_not_of(" \t\r\n");
        return s.substr(begin, end - begin + 1);
    }
};

} // namespace drape
