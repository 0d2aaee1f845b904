#include <chrono>
#include <ctime>

#include <nlohmann/json.hpp>

#include "idcm/util.hpp"
#include "idcm_cli/cli.hpp"

#ifndef IDCM_VERSION
#define IDCM_VERSION "unknown"
#endif

namespace idcm::cli {

ManifestFile describe_file(const std::filesystem::path& path) {
    return ManifestFile{path, hex64(fnv1a64(read_file(path)))};
}

std::string format_manifest(const Manifest& m, const std::string& timestamp) {
    nlohmann::ordered_json j;
    j["tool"] = "idcm";
    j["version"] = IDCM_VERSION;
    j["command"] = m.command;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    for (auto line : split(m.config_snapshot, '\n')) {
        auto eq = line.find('=');
        if (eq != std::string_view::npos) {
            config[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
        }
    }
    j["config"] = config;
    nlohmann::ordered_json seeds = nlohmann::ordered_json::object();
    for (const auto& [name, value] : m.seeds) {
        seeds[name] = value;
    }
    j["seeds"] = seeds;
    auto files = [](const std::vector<ManifestFile>& list) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& f : list) {
            arr.push_back({{"path", f.path.string()}, {"fnv1a64", f.digest}});
        }
        return arr;
    };
    j["inputs"] = files(m.inputs);
    j["outputs"] = files(m.outputs);
    j["created"] = timestamp;
    return j.dump(2) + '\n';
}

void write_manifest(const Manifest& manifest) {
    if (manifest.outputs.empty()) {
        return;
    }
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    auto path = manifest.outputs.front().path;
    path += ".manifest.json";
    atomic_write(path, format_manifest(manifest, buf));
}

} // namespace idcm::cli
