#include "analogia/continual.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <memory>
#include <set>

#include "analogia/errors.hpp"
#include "analogia/rng.hpp"
#include "parallel.hpp"

namespace analogia {

const char* baseline_name(Baseline b) {
    switch (b) {
        case Baseline::kAnalogical: return "analogical";
        case Baseline::kSdc: return "sdc";
        case Baseline::kNone: return "none";
    }
    return "?";
}

Baseline parse_baseline(const std::string& text) {
    if (text == "analogical") return Baseline::kAnalogical;
    if (text == "sdc") return Baseline::kSdc;
    if (text == "none") return Baseline::kNone;
    throw ConfigError("baseline must be analogical, sdc or none, got \"" + text + "\"");
}

void ExperimentConfig::validate() const {
    vit.validate();
    prompt.validate();
    finetune.validate();
    if (M == 0) throw ConfigError("M must be at least 1");
    if (!(scale > 0.0)) throw ConfigError("scale must be positive");
    if (workers == 0) throw ConfigError("workers must be at least 1");
    if (!(first_task.learning_rate > 0.0)) throw ConfigError("first_task.lr must be positive");
    if (first_task.stage == Stage::kAnalogy) throw ConfigError("first_task.stage cannot be analogy");
}

ContinualState make_state(const ExperimentConfig& cfg) {
    cfg.validate();
    return ContinualState{TinyViT(cfg.vit, mix_seed(cfg.seed, "init")),
                          PrototypeStore(cfg.M, cfg.vit.embed_dim, cfg.scale), {}, 0};
}

void MeasurementCache::add(std::span<const Sample> samples) {
    for (const auto& s : samples) by_class_[s.label].push_back(s);
}

std::vector<Vec> MeasurementCache::features(const TinyViT& model, ClassId id) const {
    auto it = by_class_.find(id);
    if (it == by_class_.end()) throw ContractError("measurement cache has no samples of class " + std::to_string(id));
    return extract_features(model, image_pointers(it->second));
}

std::size_t MeasurementCache::sample_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : by_class_) n += v.size();
    return n;
}

std::size_t default_workers() {
    const char* env = std::getenv("ANALOGIA_THREADS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) return 1;
    return static_cast<std::size_t>(v);
}

namespace {

std::uint64_t class_seed(const ExperimentConfig& cfg, std::string_view what, ClassId id) {
    return mix_seed(cfg.seed, what, static_cast<std::uint64_t>(static_cast<std::uint32_t>(id)));
}

std::vector<Vec> class_prototypes(const ExperimentConfig& cfg, const std::vector<Vec>& features,
                                  std::span<const Sample> samples, ClassId id) {
    std::vector<Vec> pts;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].label == id) pts.push_back(features[i]);
    if (pts.empty()) throw ContractError("class " + std::to_string(id) + " has no training samples");
    return kmeans(pts, cfg.M, class_seed(cfg, "kmeans", id));
}

// A trained prompt with the subset it was trained (and later re-encoded) on.
struct ClassPrompt {
    ClassId class_id = 0;
    std::vector<const Image*> images;
    APrompt prompt;
    ConversionRecord record;
};

// Per-class subsets: K-NN union under the snapshot (CIL) or every current
// sample of the class, each aimed at its nearest prototype (DIL).
std::vector<ClassPrompt> train_class_prompts(const TinyViT& snapshot, const std::vector<Vec>& old_features,
                                             std::span<const Sample> train, const PrototypeStore& store,
                                             const std::vector<ClassId>& classes, bool whole_class,
                                             const ExperimentConfig& cfg, std::size_t task_number) {
    std::vector<ClassPrompt> out(classes.size());
    detail::parallel_for(classes.size(), cfg.workers, [&](std::size_t k) {
        const ClassId y = classes[k];
        const auto& protos = store.prototypes(y);
        std::vector<std::size_t> idx;
        std::vector<Vec> targets;
        if (whole_class) {
            for (std::size_t i = 0; i < train.size(); ++i) {
                if (train[i].label != y) continue;
                std::size_t best = 0;
                double bd = std::numeric_limits<double>::infinity();
                for (std::size_t m = 0; m < protos.size(); ++m) {
                    const double d = distance(old_features[i], protos[m], cfg.scale);
                    if (d < bd) {
                        bd = d;
                        best = m;
                    }
                }
                idx.push_back(i);
                targets.push_back(protos[best]);
            }
        } else {
            ClassSubset subset = build_class_subset(old_features, protos, cfg.prompt.K, cfg.scale);
            idx = std::move(subset.samples);
            for (auto m : subset.target) targets.push_back(protos[m]);
        }
        ClassPrompt& cp = out[k];
        cp.class_id = y;
        if (idx.empty()) return;
        for (auto i : idx) cp.images.push_back(&train[i].image);
        const auto column = static_cast<std::size_t>(y);
        PromptTrainResult r = train_prompt(snapshot, cp.images, targets, y, column, cfg.prompt, cfg.scale,
                                           mix_seed(cfg.seed, "prompt", task_number * 100003ull + column));
        cp.prompt = std::move(r.prompt);
        cp.record.task = task_number;
        cp.record.class_id = y;
        cp.record.subset_size = idx.size();
        cp.record.rate = conversion_rate(snapshot, cp.images, cp.prompt, column);
        cp.record.initial_loss = r.initial_loss;
        cp.record.final_loss = r.final_loss;
    });
    return out;
}

struct ShiftTables {
    std::map<ClassId, std::vector<ShiftEstimate>> primary;  // per configured baseline
    std::map<ClassId, std::vector<ShiftEstimate>> sdc_counterfactual;
};

std::vector<ShiftEstimate> estimates_for(const std::vector<FeaturePair>& pairs, const std::vector<Vec>& protos,
                                         double scale, ClassId y, bool raw) {
    std::vector<ShiftEstimate> out;
    for (std::size_t m = 0; m < protos.size(); ++m) {
        out.push_back(raw ? estimate_shift_sdc(pairs, protos[m], scale, y, m)
                          : estimate_shift(pairs, protos[m], scale, y, m));
    }
    return out;
}

ShiftTables estimate_shifts(const ExperimentConfig& cfg, const PrototypeStore& store,
                            const std::vector<ClassId>& old_classes, const std::vector<ClassPrompt>& prompts,
                            const TinyViT& snapshot, const TinyViT& model, const std::vector<Vec>& f_old,
                            const std::vector<Vec>& f_new, bool want_counterfactual) {
    ShiftTables tables;
    if (cfg.baseline == Baseline::kAnalogical) {
        for (const auto& cp : prompts) {
            if (cp.images.empty()) continue;
            const auto before = extract_features(snapshot, cp.images, &cp.prompt.tokens);
            const auto after = extract_features(model, cp.images, &cp.prompt.tokens);
            std::vector<FeaturePair> pairs(before.size());
            for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i] = {before[i], after[i]};
            tables.primary[cp.class_id] = estimates_for(pairs, store.prototypes(cp.class_id), cfg.scale, cp.class_id, false);
        }
    }
    const bool need_raw = cfg.baseline == Baseline::kSdc || want_counterfactual;
    if (need_raw) {
        std::vector<FeaturePair> raw(f_old.size());
        for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = {f_old[i], f_new[i]};
        for (ClassId y : old_classes) {
            auto est = estimates_for(raw, store.prototypes(y), cfg.scale, y, true);
            if (cfg.baseline == Baseline::kSdc) tables.primary[y] = est;
            else tables.sdc_counterfactual[y] = std::move(est);
        }
    }
    return tables;
}

// Applies the configured estimator and, when measuring, records bias against
// prototypes re-derived from retained old data under the updated model.
void counteract_and_measure(const ExperimentConfig& cfg, ContinualState& state, const std::vector<ClassId>& old_classes,
                            const ShiftTables& tables, const MeasurementCache* cache, std::size_t task_number,
                            std::vector<BiasRecord>& records) {
    std::map<ClassId, std::vector<Vec>> previous;
    for (ClassId y : old_classes) previous[y] = state.store.prototypes(y);

    for (const auto& [y, ests] : tables.primary) {
        for (const auto& e : ests) counteract(state.store, e);
    }
    if (!cache) return;

    const auto nan = std::numeric_limits<double>::quiet_NaN();
    const auto primary = cfg.baseline == Baseline::kAnalogical ? Estimator::kAnalogical
                         : cfg.baseline == Baseline::kSdc      ? Estimator::kSdc
                                                               : Estimator::kNone;
    for (ClassId y : old_classes) {
        if (!cache->contains(y)) continue;
        const auto truth = kmeans(cache->features(state.model, y), cfg.M, class_seed(cfg, "kmeans", y));
        const auto& now = state.store.prototypes(y);
        const auto bias = matched_bias(now, truth, cfg.scale);
        auto pit = tables.primary.find(y);
        for (std::size_t m = 0; m < now.size(); ++m) {
            const double ref = pit != tables.primary.end() ? pit->second[m].mean_reference_distance : nan;
            records.push_back({task_number, y, m, primary, bias[m], ref});
        }
        auto cit = tables.sdc_counterfactual.find(y);
        if (cit == tables.sdc_counterfactual.end()) continue;
        std::vector<Vec> alt = previous.at(y);
        for (std::size_t m = 0; m < alt.size(); ++m)
            for (std::size_t j = 0; j < alt[m].size(); ++j) alt[m][j] += cit->second[m].shift[j];
        const auto alt_bias = matched_bias(alt, truth, cfg.scale);
        for (std::size_t m = 0; m < alt.size(); ++m) {
            records.push_back({task_number, y, m, Estimator::kSdc, alt_bias[m], cit->second[m].mean_reference_distance});
        }
    }
}

FinetuneStats first_task_training(ContinualState& state, std::span<const Sample> train, const ExperimentConfig& cfg,
                                  const FinetuneFn& finetune) {
    state.model.set_stage(cfg.first_task.stage);
    if (finetune) return finetune(state.model, train, nullptr, 0);
    FinetuneConfig fc = cfg.finetune;
    fc.epochs = cfg.first_task.epochs;
    fc.learning_rate = cfg.first_task.learning_rate;
    fc.use_sc = false;
    fc.use_kd = false;
    return finetune_task(state.model, train, nullptr, 0, fc, cfg.scale, mix_seed(cfg.seed, "finetune", 0));
}

void check_task(const Task& task) {
    if (task.train.empty()) throw ContractError("task has no training samples");
    if (task.labels.empty()) throw ContractError("task has no labels");
    std::set<ClassId> labels(task.labels.begin(), task.labels.end());
    if (labels.size() != task.labels.size()) throw ContractError("task lists a label twice");
    for (const auto& s : task.train) {
        if (!labels.contains(s.label)) throw ContractError("sample label " + std::to_string(s.label) + " not in task labels");
    }
    for (const auto& s : task.test) {
        if (!labels.contains(s.label)) throw ContractError("sample label " + std::to_string(s.label) + " not in task labels");
    }
}

TaskAudit audit(const ContinualState& state, const ExperimentConfig& cfg, std::size_t task_number,
                const std::vector<std::weak_ptr<detail::Node>>& prompts) {
    TaskAudit a;
    a.task = task_number;
    a.classes = state.store.num_classes();
    a.prototype_floats = state.store.persistent_floats();
    a.expected_prototype_floats = cfg.M * cfg.vit.embed_dim * state.classes.size();
    a.model_parameters = state.model.parameter_count();
    a.prompts_trained = prompts.size();
    a.prompts_alive = static_cast<std::size_t>(
        std::count_if(prompts.begin(), prompts.end(), [](const auto& w) { return !w.expired(); }));
    return a;
}

TaskReport run_task_impl(ContinualState& state, const Task& task, const ExperimentConfig& cfg,
                         MeasurementCache* cache, const FinetuneFn& finetune, bool dil,
                         std::vector<std::weak_ptr<detail::Node>>& prompt_nodes) {
    TaskReport rep;
    const std::size_t task_number = state.tasks_seen + 1;
    const auto images = image_pointers(task.train);
    const bool first = state.tasks_seen == 0;

    if (!dil || first) {
        const auto next = static_cast<ClassId>(state.classes.size());
        for (std::size_t k = 0; k < task.labels.size(); ++k) {
            const ClassId y = task.labels[k];
            if (state.store.contains(y)) throw ContractError("label collision: class " + std::to_string(y) + " already learned");
            if (y != next + static_cast<ClassId>(k)) {
                throw ContractError("class ids must be contiguous in arrival order; expected " +
                                    std::to_string(next + static_cast<ClassId>(k)) + ", got " + std::to_string(y));
            }
        }
    } else {
        for (ClassId y : task.labels) {
            if (!state.store.contains(y)) throw ContractError("domain introduces unseen label " + std::to_string(y));
        }
    }

    if (first) {
        state.model.register_classes(task.labels.size());
        state.classes.insert(state.classes.end(), task.labels.begin(), task.labels.end());
        rep.finetune = first_task_training(state, task.train, cfg, finetune);
        const auto f = extract_features(state.model, images);
        for (ClassId y : task.labels) state.store.register_class(y, class_prototypes(cfg, f, task.train, y));
        return rep;
    }

    const TinyViT snapshot = state.model.snapshot();
    const std::size_t old_count = state.model.num_classes();
    const std::vector<ClassId> old_classes = dil ? task.labels : state.store.class_ids();
    const auto f_old = extract_features(snapshot, images);

    std::vector<ClassPrompt> prompts;
    if (cfg.baseline == Baseline::kAnalogical) {
        prompts = train_class_prompts(snapshot, f_old, task.train, state.store, old_classes, dil, cfg, task_number);
        for (const auto& cp : prompts) {
            if (cp.images.empty()) continue;
            rep.conversions.push_back(cp.record);
            prompt_nodes.push_back(cp.prompt.tokens.node());
        }
    }

    if (!dil) {
        state.model.register_classes(task.labels.size());
        state.classes.insert(state.classes.end(), task.labels.begin(), task.labels.end());
    }
    state.model.set_stage(Stage::kFinetune);
    const std::size_t local_from = dil ? 0 : old_count;
    rep.finetune = finetune ? finetune(state.model, task.train, &snapshot, local_from)
                            : finetune_task(state.model, task.train, &snapshot, local_from, cfg.finetune, cfg.scale,
                                            mix_seed(cfg.seed, "finetune", task_number - 1));
    const auto f_new = extract_features(state.model, images);

    const bool measure = cache != nullptr;
    const ShiftTables tables = estimate_shifts(cfg, state.store, old_classes, prompts, snapshot, state.model, f_old,
                                               f_new, measure && cfg.baseline == Baseline::kAnalogical);
    counteract_and_measure(cfg, state, old_classes, tables, cache, task_number, rep.bias);

    if (!dil) {
        for (ClassId y : task.labels) state.store.register_class(y, class_prototypes(cfg, f_new, task.train, y));
    } else {
        const double n = static_cast<double>(state.tasks_seen + 1);
        for (ClassId y : task.labels) {
            const auto fresh = class_prototypes(cfg, f_new, task.train, y);
            auto merged = state.store.prototypes(y);
            const auto match = greedy_match(merged, fresh, cfg.scale);
            for (std::size_t m = 0; m < merged.size(); ++m)
                for (std::size_t j = 0; j < merged[m].size(); ++j)
                    merged[m][j] = ((n - 1.0) * merged[m][j] + fresh[match[m]][j]) / n;
            state.store.replace(y, std::move(merged));
        }
    }
    return rep;
}

TaskReport run_any(ContinualState& state, const Task& task, const ExperimentConfig& cfg, MeasurementCache* cache,
                   const FinetuneFn& finetune, bool dil) {
    cfg.validate();
    check_task(task);
    if (cfg.instrument_bias && !cache) throw ContractError("instrumented runs need a measurement cache");
    std::vector<std::weak_ptr<detail::Node>> prompt_nodes;
    TaskReport rep = run_task_impl(state, task, cfg, cache, finetune, dil, prompt_nodes);
    ++state.tasks_seen;
    if (cache) cache->add(task.train);
    rep.audit = audit(state, cfg, state.tasks_seen, prompt_nodes);
    return rep;
}

}  // namespace

TaskReport run_task(ContinualState& state, const Task& task, const ExperimentConfig& cfg, MeasurementCache* cache,
                    const FinetuneFn& finetune) {
    return run_any(state, task, cfg, cache, finetune, false);
}

TaskReport run_dil_task(ContinualState& state, const Task& task, const ExperimentConfig& cfg, MeasurementCache* cache,
                        const FinetuneFn& finetune) {
    return run_any(state, task, cfg, cache, finetune, true);
}

double evaluate(const ContinualState& state, std::span<const Sample> test) {
    if (test.empty()) throw ContractError("evaluate: empty test split");
    const auto f = extract_features(state.model, image_pointers(test));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (snmp_classify(f[i], state.store) == test[i].label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(test.size());
}

RunResult run_stream(const ExperimentConfig& cfg, const TaskStream& stream, const TaskCallback& on_task) {
    cfg.validate();
    if (stream.tasks.empty()) throw ContractError("run_stream: stream has no tasks");
    const bool dil = stream.mode() == StreamMode::kDIL;
    RunResult run{AccuracyMatrix{}, make_state(cfg), {}, {}, {}, {}, 0, cfg.instrument_bias};
    std::unique_ptr<MeasurementCache> cache;
    if (cfg.instrument_bias) cache = std::make_unique<MeasurementCache>();

    for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
        const Task& task = stream.tasks[t];
        if (task.test.empty()) throw ContractError("task " + std::to_string(t + 1) + " has no test samples");
        TaskReport rep = dil ? run_dil_task(run.state, task, cfg, cache.get())
                             : run_task(run.state, task, cfg, cache.get());
        run.bias.insert(run.bias.end(), rep.bias.begin(), rep.bias.end());
        run.conversions.insert(run.conversions.end(), rep.conversions.begin(), rep.conversions.end());
        run.audits.push_back(rep.audit);
        run.finetune.push_back(rep.finetune);

        const auto before = TinyViT::prompted_forward_count();
        std::vector<double> row;
        for (std::size_t i = 0; i <= t; ++i) row.push_back(evaluate(run.state, stream.tasks[i].test));
        run.eval_prompted_forwards += TinyViT::prompted_forward_count() - before;
        run.accuracy.append_row(std::move(row));
        if (on_task) on_task(t + 1, run.state);
    }
    return run;
}

const std::vector<BiasRecord>& prototype_bias(const RunResult& run) {
    if (!run.instrumented) throw ContractError("prototype_bias: run was not instrumented");
    return run.bias;
}

}  // namespace analogia
