#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "analogia/analogy.hpp"
#include "analogia/finetune.hpp"
#include "analogia/metrics.hpp"
#include "analogia/prototypes.hpp"
#include "analogia/synth.hpp"
#include "analogia/vit.hpp"

namespace analogia {

enum class Baseline { kAnalogical, kSdc, kNone };
const char* baseline_name(Baseline b);
Baseline parse_baseline(const std::string& text);

// Stage and schedule for the very first task.
struct FirstTaskConfig {
    Stage stage = Stage::kFull;
    std::size_t epochs = 10;
    double learning_rate = 0.01;
};

struct ExperimentConfig {
    ViTConfig vit;
    PromptTrainConfig prompt;
    FinetuneConfig finetune;
    FirstTaskConfig first_task;
    std::size_t M = 6;
    double scale = kDefaultDistanceScale;
    Baseline baseline = Baseline::kAnalogical;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    // Keep old-class data aside (never for training) to measure prototype bias.
    bool instrument_bias = false;

    void validate() const;
};

// Everything that persists between tasks: weights, prototypes, class order.
struct ContinualState {
    TinyViT model;
    PrototypeStore store;
    std::vector<ClassId> classes;  // arrival order == head column order
    std::size_t tasks_seen = 0;
};

ContinualState make_state(const ExperimentConfig& cfg);

// Old-class samples retained purely for measurement. Hands out features only.
class MeasurementCache {
public:
    void add(std::span<const Sample> samples);
    bool contains(ClassId id) const { return by_class_.contains(id); }
    std::vector<Vec> features(const TinyViT& model, ClassId id) const;
    std::size_t sample_count() const;

private:
    std::map<ClassId, std::vector<Sample>> by_class_;
};

struct TaskAudit {
    std::size_t task = 0;  // 1-based
    std::size_t classes = 0;
    std::size_t prototype_floats = 0;
    std::size_t expected_prototype_floats = 0;  // M * D * classes
    std::size_t model_parameters = 0;
    std::size_t prompts_trained = 0;
    std::size_t prompts_alive = 0;  // prompt tensors still referenced after the task returned
    bool ok() const { return prototype_floats == expected_prototype_floats && prompts_alive == 0; }
};

struct ConversionRecord {
    std::size_t task = 0;  // 1-based
    ClassId class_id = 0;
    std::size_t subset_size = 0;
    double rate = 0.0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

struct TaskReport {
    std::vector<BiasRecord> bias;
    std::vector<ConversionRecord> conversions;
    FinetuneStats finetune;
    TaskAudit audit;
};

// Replaces finetune_task inside run_task (test stubs).
using FinetuneFn = std::function<FinetuneStats(TinyViT& model, std::span<const Sample> data, const TinyViT* snapshot,
                                               std::size_t old_count)>;

// One CIL task: prompts per old class, finetune, new prototypes, shift
// counteraction. `cache`, when given, receives this task's data after the
// bias measurement and must not be null in instrumented configs.
TaskReport run_task(ContinualState& state, const Task& task, const ExperimentConfig& cfg,
                    MeasurementCache* cache = nullptr, const FinetuneFn& finetune = {});

// One DIL domain: prompts are trained on every current sample of each class,
// and fresh prototypes are averaged into the counteracted ones.
TaskReport run_dil_task(ContinualState& state, const Task& task, const ExperimentConfig& cfg,
                        MeasurementCache* cache = nullptr, const FinetuneFn& finetune = {});

// SNMP accuracy on `test` with prompt-free features.
double evaluate(const ContinualState& state, std::span<const Sample> test);

struct RunResult {
    AccuracyMatrix accuracy;
    ContinualState state;
    std::vector<BiasRecord> bias;
    std::vector<ConversionRecord> conversions;
    std::vector<TaskAudit> audits;
    std::vector<FinetuneStats> finetune;
    std::uint64_t eval_prompted_forwards = 0;
    bool instrumented = false;
};

using TaskCallback = std::function<void(std::size_t task, const ContinualState& state)>;

RunResult run_stream(const ExperimentConfig& cfg, const TaskStream& stream, const TaskCallback& on_task = {});

// Bias records of an instrumented run; throws ContractError otherwise.
const std::vector<BiasRecord>& prototype_bias(const RunResult& run);

// Worker count from ANALOGIA_THREADS, or 1 when unset or invalid.
std::size_t default_workers();

}  // namespace analogia
