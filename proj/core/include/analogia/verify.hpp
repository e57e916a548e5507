#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "analogia/continual.hpp"
#include "analogia/synth.hpp"

namespace analogia {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool passed = false;
    bool skipped = false;
    std::string detail;
    double seconds = 0.0;
};

// Desk-scale setup used by the stream criteria (5-8).
ExperimentConfig desk_experiment_config();
// High-gap CIL stream: 5 tasks x 2 classes, 16x16 images.
SynthSpec desk_stream_spec(std::uint64_t seed, std::size_t tasks = 5);

struct VerifyOptions {
    ExperimentConfig config = desk_experiment_config();
    std::size_t seeds = 5;
    std::size_t gradient_configs = 24;
    std::size_t workers = 1;
    // Only the fast structural criteria (1-4, 9); the stream criteria are skipped.
    bool quick = false;
    std::function<void(const CriterionResult&)> on_result;
};

std::vector<CriterionResult> run_acceptance(const VerifyOptions& options);

// "[PASS] 3 classifier equivalences (0.1 s): detail"
std::string format_result(const CriterionResult& r);

// Individual criteria, usable on their own.
CriterionResult check_gradients(std::size_t configs, std::uint64_t seed);
CriterionResult check_translation_oracle(std::uint64_t seed);
CriterionResult check_classifier_equivalence(std::uint64_t seed);
CriterionResult check_parameter_isolation(std::uint64_t seed);
CriterionResult check_determinism_and_audit(const ExperimentConfig& cfg, std::size_t workers);

}  // namespace analogia
