#pragma once

#include "subdiff/errors.hpp"
#include "subdiff/inverse.hpp"
#include "subdiff/presets.hpp"
#include "subdiff/training.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace subdiff {

/// A 2D cut of a 3D field: coordinate `axis` fixed at `value`, evaluated at time `time`.
struct SliceSpec {
    int axis = 2;
    double value = 0.5;
    double time = 1.0;

    friend bool operator==(const SliceSpec&, const SliceSpec&) = default;
};

/**
 * Fully resolved settings of one run. Every field has a default; run presets
 * overwrite a subset, then config files and --set overrides are applied on top.
 */
struct RunConfig {
    // [problem]
    std::string preset = "forward2d-t1";  // run preset the defaults came from
    std::string problem = "forward2d-t1";  // problem definition (see presets::names)
    double alpha = 0.5;

    // [network]
    NetworkShape solution{256, 5};
    NetworkShape coefficient{64, 4};

    // [training]
    long iterations = 120000;
    double learning_rate = 1e-4;
    int residual_batch = 1000;
    int boundary_batch = 1600;
    double w_eq = 1.0;
    double w_bd = 2000.0;
    int stehfest_terms = 4;
    double t1 = 0.01;
    SDistribution s_distribution = SDistribution::Uniform;
    int log_stride = 100;
    std::uint64_t seed = 1;

    // [inverse]
    double noise = 0.001;
    double observation_lower = 0.3;
    double observation_upper = 0.7;
    int observation_grid = 31;
    int observation_batch = 2048;
    int prior_grid = 51;
    double w_obs = 1000.0;
    double w_prior = 100.0;

    // [eval]
    std::vector<double> times{0.02, 1.0};
    int grid = 101;  // nodes per axis for manufactured-solution and coefficient comparisons
    std::vector<SliceSpec> slices;

    // [fdm]
    int fdm_nodes = 101;
    int fdm_time_levels = 101;

    [[nodiscard]] ProblemSpec problem_spec() const { return presets::by_name(problem, alpha); }

    [[nodiscard]] TrainConfig train_config() const {
        TrainConfig c;
        c.network = solution;
        c.residual_batch = residual_batch;
        c.boundary_batch = boundary_batch;
        c.weights = {w_eq, w_bd};
        c.adam.learning_rate = learning_rate;
        c.iterations = iterations;
        c.stehfest_terms = stehfest_terms;
        c.t1 = t1;
        c.seed = seed;
        c.s_distribution = s_distribution;
        c.log_stride = log_stride;
        return c;
    }

    [[nodiscard]] InverseConfig inverse_config() const {
        InverseConfig c;
        c.solution_net = solution;
        c.coefficient_net = coefficient;
        c.residual_batch = residual_batch;
        c.boundary_batch = boundary_batch;
        c.observation_batch = observation_batch;
        c.observation_grid = observation_grid;
        c.prior_grid = prior_grid;
        c.noise = noise;
        c.observation_lower = observation_lower;
        c.observation_upper = observation_upper;
        c.weights = {w_eq, w_bd, w_obs, w_prior};
        c.adam.learning_rate = learning_rate;
        c.iterations = iterations;
        c.stehfest_terms = stehfest_terms;
        c.t1 = t1;
        c.seed = seed;
        c.s_distribution = s_distribution;
        c.log_stride = log_stride;
        return c;
    }

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace config_detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// Shortest round-trip text, independent of the global locale.
inline std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    double v = 0.0;
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (r.ec != std::errc() || r.ptr != t.data() + t.size() || t.empty())
        throw ContractViolation("config: " + key + " expects a number, got '" + text + "'");
    return v;
}

template <class Int>
Int parse_int(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    Int v{};
    auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (r.ec != std::errc() || r.ptr != t.data() + t.size() || t.empty()) {
        // Accept integral values written in floating notation such as 2e4.
        double d = 0.0;
        const auto rd = std::from_chars(t.data(), t.data() + t.size(), d);
        if (rd.ec == std::errc() && rd.ptr == t.data() + t.size() && !t.empty() && d == static_cast<double>(static_cast<Int>(d)))
            return static_cast<Int>(d);
        throw ContractViolation("config: " + key + " expects an integer, got '" + text + "'");
    }
    return v;
}

inline std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
    return out;
}

inline std::string format_list(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
    return s;
}

inline std::vector<double> parse_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    for (const std::string& item : split(text, ',')) out.push_back(parse_double(key, item));
    return out;
}

inline constexpr char kAxes[] = {'x', 'y', 'z'};

// "z=0.5@1; y=0.5@0.5"
inline std::string format_slices(const std::vector<SliceSpec>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += "; ";
        s += std::string(1, kAxes[v[i].axis]) + "=" + format_double(v[i].value) + "@" + format_double(v[i].time);
    }
    return s;
}

inline std::vector<SliceSpec> parse_slices(const std::string& key, const std::string& text) {
    std::vector<SliceSpec> out;
    if (trim(text).empty()) return out;
    for (const std::string& item : split(text, ';')) {
        const auto eq = item.find('='), at = item.find('@');
        if (eq != 1 || at == std::string::npos || at < eq)
            throw ContractViolation("config: " + key + " entries look like z=0.5@1, got '" + item + "'");
        SliceSpec sl;
        const char ax = item[0];
        if (ax < 'x' || ax > 'z') throw ContractViolation("config: " + key + " axis must be x, y or z");
        sl.axis = ax - 'x';
        sl.value = parse_double(key, item.substr(eq + 1, at - eq - 1));
        sl.time = parse_double(key, item.substr(at + 1));
        out.push_back(sl);
    }
    return out;
}

struct Key {
    std::string section;
    std::string name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
    [[nodiscard]] std::string full() const { return section + "." + name; }
};

template <class T>
Key number_key(std::string section, std::string name, T RunConfig::*field) {
    const std::string full = section + "." + name;
    Key k{std::move(section), std::move(name), nullptr, nullptr};
    if constexpr (std::is_floating_point_v<T>) {
        k.get = [field](const RunConfig& c) { return format_double(c.*field); };
        k.set = [field, full](RunConfig& c, const std::string& v) { c.*field = parse_double(full, v); };
    } else {
        k.get = [field](const RunConfig& c) { return std::to_string(c.*field); };
        k.set = [field, full](RunConfig& c, const std::string& v) { c.*field = parse_int<T>(full, v); };
    }
    return k;
}

inline Key shape_key(std::string section, std::string name, NetworkShape RunConfig::*shape, int NetworkShape::*part) {
    const std::string full = section + "." + name;
    return {std::move(section), std::move(name),
            [shape, part](const RunConfig& c) { return std::to_string(c.*shape.*part); },
            [shape, part, full](RunConfig& c, const std::string& v) { c.*shape.*part = parse_int<int>(full, v); }};
}

inline Key string_key(std::string section, std::string name, std::string RunConfig::*field) {
    return {std::move(section), std::move(name), [field](const RunConfig& c) { return c.*field; },
            [field](RunConfig& c, const std::string& v) { c.*field = trim(v); }};
}

}  // namespace config_detail

/// Every recognised key, in file order. Sections: problem, network, training, inverse, eval, fdm.
inline const std::vector<config_detail::Key>& config_keys() {
    using namespace config_detail;
    static const std::vector<Key> keys = [] {
        std::vector<Key> k;
        k.push_back(string_key("problem", "preset", &RunConfig::preset));
        k.push_back({"problem", "name", [](const RunConfig& c) { return c.problem; },
                     [](RunConfig& c, const std::string& v) {
                         const std::string name = trim(v);
                         (void)presets::by_name(name);
                         c.problem = name;
                     }});
        k.push_back(number_key("problem", "alpha", &RunConfig::alpha));

        k.push_back(shape_key("network", "width", &RunConfig::solution, &NetworkShape::width));
        k.push_back(shape_key("network", "depth", &RunConfig::solution, &NetworkShape::depth));
        k.push_back(shape_key("network", "coefficient_width", &RunConfig::coefficient, &NetworkShape::width));
        k.push_back(shape_key("network", "coefficient_depth", &RunConfig::coefficient, &NetworkShape::depth));

        k.push_back(number_key("training", "iterations", &RunConfig::iterations));
        k.push_back(number_key("training", "learning_rate", &RunConfig::learning_rate));
        k.push_back(number_key("training", "residual_batch", &RunConfig::residual_batch));
        k.push_back(number_key("training", "boundary_batch", &RunConfig::boundary_batch));
        k.push_back(number_key("training", "w_eq", &RunConfig::w_eq));
        k.push_back(number_key("training", "w_bd", &RunConfig::w_bd));
        k.push_back(number_key("training", "stehfest_terms", &RunConfig::stehfest_terms));
        k.push_back(number_key("training", "t1", &RunConfig::t1));
        k.push_back({"training", "s_distribution",
                     [](const RunConfig& c) {
                         return c.s_distribution == SDistribution::Uniform ? std::string("uniform") : std::string("log-uniform");
                     },
                     [](RunConfig& c, const std::string& v) {
                         const std::string t = trim(v);
                         if (t == "uniform")
                             c.s_distribution = SDistribution::Uniform;
                         else if (t == "log-uniform")
                             c.s_distribution = SDistribution::LogUniform;
                         else
                             throw ContractViolation("config: training.s_distribution is uniform or log-uniform, got '" + t + "'");
                     }});
        k.push_back(number_key("training", "log_stride", &RunConfig::log_stride));
        k.push_back(number_key("training", "seed", &RunConfig::seed));

        k.push_back(number_key("inverse", "noise", &RunConfig::noise));
        k.push_back(number_key("inverse", "observation_lower", &RunConfig::observation_lower));
        k.push_back(number_key("inverse", "observation_upper", &RunConfig::observation_upper));
        k.push_back(number_key("inverse", "observation_grid", &RunConfig::observation_grid));
        k.push_back(number_key("inverse", "observation_batch", &RunConfig::observation_batch));
        k.push_back(number_key("inverse", "prior_grid", &RunConfig::prior_grid));
        k.push_back(number_key("inverse", "w_obs", &RunConfig::w_obs));
        k.push_back(number_key("inverse", "w_prior", &RunConfig::w_prior));

        k.push_back({"eval", "times", [](const RunConfig& c) { return format_list(c.times); },
                     [](RunConfig& c, const std::string& v) { c.times = parse_list("eval.times", v); }});
        k.push_back(number_key("eval", "grid", &RunConfig::grid));
        k.push_back({"eval", "slices", [](const RunConfig& c) { return format_slices(c.slices); },
                     [](RunConfig& c, const std::string& v) { c.slices = parse_slices("eval.slices", v); }});

        k.push_back(number_key("fdm", "nodes", &RunConfig::fdm_nodes));
        k.push_back(number_key("fdm", "time_levels", &RunConfig::fdm_time_levels));
        return k;
    }();
    return keys;
}

inline const config_detail::Key& config_key(const std::string& full_name) {
    for (const auto& k : config_keys())
        if (k.full() == full_name) return k;
    throw ContractViolation("config: unknown key '" + full_name + "'");
}

inline void set_config_value(RunConfig& c, const std::string& full_name, const std::string& value) {
    config_key(full_name).set(c, value);
}

inline std::string get_config_value(const RunConfig& c, const std::string& full_name) { return config_key(full_name).get(c); }

/// Run presets: full-budget runs plus reduced "-desk" budgets.
namespace run_presets {

inline const std::vector<std::string>& names() {
    static const std::vector<std::string> all{"forward1d-desk", "forward2d-t1",      "forward2d-t1-desk", "forward2d-t10",
                                              "forward3d",      "forward3d-desk",    "inverse2d-desk",    "inverse3d",
                                              "inverse3d-desk"};
    return all;
}

inline RunConfig make(const std::string& name) {
    RunConfig c;
    c.preset = name;
    if (name == "forward2d-t1" || name == "forward2d-t1-desk") {
        c.problem = "forward2d-t1";
        c.times = {0.02, 1.0};
        if (name == "forward2d-t1-desk") {
            c.solution = {128, 5};
            c.iterations = 20000;
        }
    } else if (name == "forward2d-t10") {
        c.problem = "forward2d-t10";
        c.times = {0.05, 10.0};
        c.fdm_time_levels = 201;
    } else if (name == "forward3d" || name == "forward3d-desk") {
        c.problem = "forward3d";
        c.iterations = 150000;
        c.times = {0.5, 1.0};
        c.grid = 41;
        c.slices = {{2, 0.5, 1.0}, {1, 0.5, 0.5}};
        if (name == "forward3d-desk") {
            c.solution = {64, 4};
            c.iterations = 5000;
        }
    } else if (name == "forward1d-desk") {
        c.problem = "forward1d";
        c.solution = {64, 4};
        c.iterations = 5000;
        c.times = {0.5, 1.0};
        c.fdm_nodes = 201;
    } else if (name == "inverse3d" || name == "inverse3d-desk") {
        c.problem = "inverse3d";
        c.boundary_batch = 4000;
        c.iterations = 150000;
        c.times = {1.0};
        c.grid = 41;
        c.slices = {{2, 0.8, 1.0}};
        if (name == "inverse3d-desk") {
            c.solution = {64, 4};
            c.coefficient = {32, 3};
            c.observation_grid = 11;
            c.prior_grid = 11;
            c.observation_batch = 512;
            c.residual_batch = 500;
            c.boundary_batch = 800;
            c.iterations = 3000;
        }
    } else if (name == "inverse2d-desk") {
        c.problem = "inverse2d";
        c.solution = {128, 5};
        c.boundary_batch = 1600;
        c.iterations = 15000;
        c.times = {1.0};
        c.grid = 41;
    } else {
        std::string known;
        for (const auto& n : names()) known += " " + n;
        throw ContractViolation("unknown preset '" + name + "'; known:" + known);
    }
    if (name.ends_with("-desk")) {
        // Short budgets: at 1e-4 and uniform s the small-s end (late times) is still untrained.
        c.learning_rate = 1e-3;
        c.s_distribution = SDistribution::LogUniform;
    }
    return c;
}

}  // namespace run_presets

/// Ordered (key, value) pairs as read from an INI file; "section.key" names.
using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

inline ConfigEntries parse_ini(std::istream& in, const std::string& origin = "config") {
    ConfigEntries out;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = config_detail::trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw FormatError(origin + ":" + std::to_string(lineno) + ": malformed section header");
            section = config_detail::trim(std::string_view(t).substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw FormatError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        if (section.empty()) throw FormatError(origin + ":" + std::to_string(lineno) + ": key outside any section");
        out.emplace_back(section + "." + config_detail::trim(std::string_view(t).substr(0, eq)),
                         config_detail::trim(std::string_view(t).substr(eq + 1)));
    }
    return out;
}

inline std::string to_ini(const RunConfig& c) {
    std::ostringstream os;
    std::string section;
    for (const auto& k : config_keys()) {
        if (k.section != section) {
            if (!section.empty()) os << '\n';
            section = k.section;
            os << '[' << section << "]\n";
        }
        os << k.name << " = " << k.get(c) << '\n';
    }
    return os.str();
}

/// Section -> key -> value text, for embedding in a manifest.
inline std::map<std::string, std::map<std::string, std::string>> config_table(const RunConfig& c) {
    std::map<std::string, std::map<std::string, std::string>> t;
    for (const auto& k : config_keys()) t[k.section][k.name] = k.get(c);
    return t;
}

/**
 * Resolution order: preset defaults (from `preset`, else problem.preset inside
 * the entries), then the entries in order, then `overrides` ("section.key=value").
 */
inline RunConfig resolve_config(const std::string& preset, const ConfigEntries& entries,
                                const std::vector<std::string>& overrides = {}) {
    std::string base = preset;
    if (base.empty())
        for (const auto& [k, v] : entries)
            if (k == "problem.preset") base = v;
    RunConfig c = base.empty() ? RunConfig{} : run_presets::make(base);
    for (const auto& [k, v] : entries) {
        if (k == "problem.preset") {
            (void)config_key(k);
            continue;
        }
        set_config_value(c, k, v);
    }
    for (const std::string& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ContractViolation("--set expects section.key=value, got '" + o + "'");
        set_config_value(c, config_detail::trim(std::string_view(o).substr(0, eq)), o.substr(eq + 1));
    }
    return c;
}

inline ConfigEntries read_ini_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open config file '" + path + "'");
    return parse_ini(in, path);
}

}  // namespace subdiff
