#ifndef SEMCLIP_CONFIG_HPP
#define SEMCLIP_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "semclip/experiments.hpp"

namespace semclip::config {

inline constexpr const char* kArtifactVersion = "0.1.0";

/// Flat key=value configuration with every default materialized. Unknown
/// keys are rejected; values are validated on parse.
struct RunConfig {
    std::map<std::string, std::string> values;  // full key set, sorted

    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    std::size_t get_size(const std::string& key) const;
    std::vector<double> get_double_list(const std::string& key) const;
    std::vector<std::uint64_t> get_u64_list(const std::string& key) const;

    std::uint64_t hash() const;
    std::string canonical_text() const;

    bool seed_overridden_by_env = false;
};

std::vector<std::string> known_keys();

RunConfig default_config();
RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text);

exp::ExperimentConfig to_experiment_config(const RunConfig& cfg);
train::TrainConfig to_train_config(const RunConfig& cfg);

/// Provenance record written beside every output file. The manifest hash
/// covers everything that determines the output bytes; the timestamp is
/// informational only.
struct RunManifest {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::string artifact_version = kArtifactVersion;
    std::map<std::string, std::uint64_t> checkpoint_hashes;
    std::string command;
    std::string timestamp;
    bool seed_overridden_by_env = false;

    std::uint64_t hash() const;
};

void write_manifest(const RunManifest& manifest, const RunConfig& cfg, const std::string& out_path);
RunManifest read_manifest(const std::string& path);

/// CLI entry point; returns the process exit status (2 for usage errors).
int run_cli(int argc, const char* const* argv);

}  // namespace semclip::config

#endif
