#pragma once

#include "subdiff/config.hpp"
#include "subdiff/version.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace subdiff {

/// Record of one run: what was asked for, what came out, and where it was written.
struct RunManifest {
    std::string command;  // forward, inverse, fdm
    RunConfig config;
    double duration_seconds = 0.0;
    std::map<std::string, double> metrics;
    std::vector<std::string> files;  // relative to the output directory
};

inline nlohmann::json to_json(const RunManifest& m) {
    nlohmann::json j;
    j["format"] = "subdiff-manifest";
    j["format_version"] = 1;
    j["command"] = m.command;
    j["preset"] = m.config.preset;
    j["seed"] = m.config.seed;
    j["code_version"] = std::string(kVersion) + "+" + kGitRevision;
    j["duration_seconds"] = m.duration_seconds;
    j["config"] = config_table(m.config);
    j["metrics"] = m.metrics;
    j["files"] = m.files;
    return j;
}

inline void save_manifest(const std::filesystem::path& path, const RunManifest& m) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write '" + path.string() + "'");
    os << to_json(m).dump(2) << '\n';
}

/// Config entries stored in a manifest, in registry order.
inline ConfigEntries manifest_entries(const nlohmann::json& j) {
    if (!j.contains("config") || !j["config"].is_object()) throw FormatError("manifest: missing config table");
    ConfigEntries out;
    for (const auto& [section, keys] : j["config"].items())
        for (const auto& [key, value] : keys.items()) {
            if (!value.is_string()) throw FormatError("manifest: config values are strings");
            out.emplace_back(section + "." + key, value.get<std::string>());
        }
    return out;
}

inline nlohmann::json load_manifest_json(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot read '" + path.string() + "'");
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

/// Config entries from either an INI file or a run manifest (*.json).
inline ConfigEntries read_config_file(const std::filesystem::path& path) {
    if (path.extension() == ".json") return manifest_entries(load_manifest_json(path));
    return read_ini_file(path.string());
}

}  // namespace subdiff
