#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "analogia/continual.hpp"
#include "analogia/synth.hpp"

namespace analogia {

inline constexpr const char* kVersion = "0.1.0";

// JSON with hyperparameters named as in the method (K, J, M, Omega, scale,
// zeta). Missing keys keep their defaults; unknown keys and ill-typed values
// raise ConfigError naming the dotted key.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string experiment_config_to_json(const ExperimentConfig& cfg);

SynthSpec synth_spec_from_json(const std::string& json_text);
SynthSpec load_synth_spec(const std::filesystem::path& path);
std::string synth_spec_to_json(const SynthSpec& spec);

// Applies one "key=value"-style override such as ("prompt.K", "20") or ("M", "3").
void set_config_value(ExperimentConfig& cfg, const std::string& dotted_key, const std::string& value);

struct RunManifest {
    std::string command;
    std::string config_json;  // fully resolved
    std::uint64_t seed = 0;
    std::string version = kVersion;
    std::string stream_path;
    std::string stream_spec_json;
    std::string started_at;   // ISO-8601 UTC
    std::string finished_at;
    std::vector<std::string> outputs;
};

std::string manifest_to_json(const RunManifest& manifest);
std::string utc_timestamp();

}  // namespace analogia
