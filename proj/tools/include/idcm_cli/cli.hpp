#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace idcm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one subcommand. Runtime failures print a single "idcm: error: <kind>: <message>"
/// line to `err`; usage problems print usage text and return kExitUsage.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv);
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct ManifestFile {
    std::filesystem::path path;
    std::string digest;  // FNV-1a 64, hex
};

struct Manifest {
    std::string command;
    std::string config_snapshot;
    std::vector<std::pair<std::string, std::string>> seeds;
    std::vector<ManifestFile> inputs;
    std::vector<ManifestFile> outputs;
};

ManifestFile describe_file(const std::filesystem::path& path);
std::string format_manifest(const Manifest& manifest, const std::string& timestamp);
/// Writes `<primary output>.manifest.json`.
void write_manifest(const Manifest& manifest);

} // namespace idcm::cli
