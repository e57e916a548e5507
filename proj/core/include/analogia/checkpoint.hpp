#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "analogia/continual.hpp"

namespace analogia {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary container: magic, version, resolved config JSON, learner progress,
// named parameter arrays and the prototype store. Doubles are stored as
// their little-endian bit patterns, so a round trip is bit-exact.
std::string encode_checkpoint(const ExperimentConfig& cfg, const ContinualState& state);
ContinualState decode_checkpoint(const std::string& bytes, ExperimentConfig* cfg_out = nullptr);

void save_checkpoint(const std::filesystem::path& path, const ExperimentConfig& cfg, const ContinualState& state);
ContinualState load_checkpoint(const std::filesystem::path& path, ExperimentConfig* cfg_out = nullptr);

}  // namespace analogia
