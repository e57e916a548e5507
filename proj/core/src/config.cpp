#include "analogia/config.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "analogia/errors.hpp"

namespace analogia {

using nlohmann::json;

namespace {

// Reads one JSON object, rejecting keys that no handler claims.
class Section {
public:
    Section(const json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
        if (!obj_.is_object()) throw ConfigError("config section \"" + name() + "\" must be an object");
    }

    template <class T>
    Section& get(const char* key, T& out) {
        handlers_[key] = [this, key, &out](const json& v) { out = convert<T>(v, key); };
        return *this;
    }
    Section& custom(const char* key, std::function<void(const json&, const std::string&)> fn) {
        handlers_[key] = [this, key, fn = std::move(fn)](const json& v) { fn(v, path(key)); };
        return *this;
    }

    void run() {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            auto h = handlers_.find(it.key());
            if (h == handlers_.end()) throw ConfigError("unknown config key \"" + path(it.key()) + "\"");
        }
        for (auto& [key, fn] : handlers_) {
            if (obj_.contains(key)) fn(obj_.at(key));
        }
    }

    std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

private:
    std::string name() const { return prefix_.empty() ? "<root>" : prefix_; }

    template <class T>
    T convert(const json& v, const char* key) const {
        const std::string where = path(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError("config key \"" + where + "\" must be a boolean");
            return v.get<bool>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_unsigned()) throw ConfigError("config key \"" + where + "\" must be a non-negative integer");
            return static_cast<T>(v.get<std::uint64_t>());
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError("config key \"" + where + "\" must be a number");
            return v.get<T>();
        } else {
            if (!v.is_string()) throw ConfigError("config key \"" + where + "\" must be a string");
            return v.get<T>();
        }
    }

    const json& obj_;
    std::string prefix_;
    std::map<std::string, std::function<void(const json&)>> handlers_;
};

json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
}

std::string read_file(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(std::string("cannot read ") + what + " " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Stage parse_stage(const std::string& s, const std::string& where) {
    if (s == "full") return Stage::kFull;
    if (s == "finetune") return Stage::kFinetune;
    throw ConfigError("config key \"" + where + "\" must be \"full\" or \"finetune\"");
}

ExperimentConfig from_json(const json& j) {
    ExperimentConfig cfg;
    std::string baseline = baseline_name(cfg.baseline);
    Section root(j, "");
    root.get("seed", cfg.seed)
        .get("baseline", baseline)
        .get("M", cfg.M)
        .get("scale", cfg.scale)
        .get("workers", cfg.workers)
        .get("instrument_bias", cfg.instrument_bias)
        .custom("vit", [&](const json& v, const std::string& p) {
            Section s(v, p);
            s.get("image_size", cfg.vit.image_size)
                .get("channels", cfg.vit.channels)
                .get("patch_size", cfg.vit.patch_size)
                .get("embed_dim", cfg.vit.embed_dim)
                .get("depth", cfg.vit.depth)
                .get("heads", cfg.vit.heads)
                .get("mlp_ratio", cfg.vit.mlp_ratio)
                .get("num_classes_capacity", cfg.vit.num_classes_capacity)
                .run();
        })
        .custom("prompt", [&](const json& v, const std::string& p) {
            Section s(v, p);
            s.get("K", cfg.prompt.K)
                .get("J", cfg.prompt.J)
                .get("Omega", cfg.prompt.omega)
                .get("epochs", cfg.prompt.epochs)
                .get("batch_size", cfg.prompt.batch_size)
                .get("lr", cfg.prompt.learning_rate)
                .get("init_std", cfg.prompt.init_std)
                .get("use_cc", cfg.prompt.use_cc)
                .get("use_pp", cfg.prompt.use_pp)
                .get("use_de", cfg.prompt.use_de)
                .run();
        })
        .custom("finetune", [&](const json& v, const std::string& p) {
            Section s(v, p);
            s.get("epochs", cfg.finetune.epochs)
                .get("batch_size", cfg.finetune.batch_size)
                .get("lr", cfg.finetune.learning_rate)
                .get("momentum", cfg.finetune.momentum)
                .get("grad_clip", cfg.finetune.grad_clip)
                .get("use_sc", cfg.finetune.use_sc)
                .get("use_kd", cfg.finetune.use_kd)
                .get("zeta", cfg.finetune.zeta)
                .get("sc_same_label", cfg.finetune.sc_same_label)
                .run();
        })
        .custom("first_task", [&](const json& v, const std::string& p) {
            Section s(v, p);
            std::string stage = stage_name(cfg.first_task.stage);
            s.get("stage", stage).get("epochs", cfg.first_task.epochs).get("lr", cfg.first_task.learning_rate).run();
            cfg.first_task.stage = parse_stage(stage, p + ".stage");
        })
        .run();
    cfg.baseline = parse_baseline(baseline);
    cfg.validate();
    return cfg;
}

json to_json(const ExperimentConfig& cfg) {
    return json{
        {"seed", cfg.seed},
        {"baseline", baseline_name(cfg.baseline)},
        {"M", cfg.M},
        {"scale", cfg.scale},
        {"workers", cfg.workers},
        {"instrument_bias", cfg.instrument_bias},
        {"vit",
         {{"image_size", cfg.vit.image_size},
          {"channels", cfg.vit.channels},
          {"patch_size", cfg.vit.patch_size},
          {"embed_dim", cfg.vit.embed_dim},
          {"depth", cfg.vit.depth},
          {"heads", cfg.vit.heads},
          {"mlp_ratio", cfg.vit.mlp_ratio},
          {"num_classes_capacity", cfg.vit.num_classes_capacity}}},
        {"prompt",
         {{"K", cfg.prompt.K},
          {"J", cfg.prompt.J},
          {"Omega", cfg.prompt.omega},
          {"epochs", cfg.prompt.epochs},
          {"batch_size", cfg.prompt.batch_size},
          {"lr", cfg.prompt.learning_rate},
          {"init_std", cfg.prompt.init_std},
          {"use_cc", cfg.prompt.use_cc},
          {"use_pp", cfg.prompt.use_pp},
          {"use_de", cfg.prompt.use_de}}},
        {"finetune",
         {{"epochs", cfg.finetune.epochs},
          {"batch_size", cfg.finetune.batch_size},
          {"lr", cfg.finetune.learning_rate},
          {"momentum", cfg.finetune.momentum},
          {"grad_clip", cfg.finetune.grad_clip},
          {"use_sc", cfg.finetune.use_sc},
          {"use_kd", cfg.finetune.use_kd},
          {"zeta", cfg.finetune.zeta},
          {"sc_same_label", cfg.finetune.sc_same_label}}},
        {"first_task",
         {{"stage", stage_name(cfg.first_task.stage)},
          {"epochs", cfg.first_task.epochs},
          {"lr", cfg.first_task.learning_rate}}},
    };
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) { return from_json(parse_json(json_text)); }

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    return parse_experiment_config(read_file(path, "config file"));
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) { return to_json(cfg).dump(2); }

void set_config_value(ExperimentConfig& cfg, const std::string& dotted_key, const std::string& value) {
    json j = to_json(cfg);
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::parse_error&) {
        parsed = value;  // bare word, e.g. a baseline name
    }
    std::string pointer = "/" + dotted_key;
    for (auto& c : pointer)
        if (c == '.') c = '/';
    const json::json_pointer ptr(pointer);
    if (!j.contains(ptr)) throw ConfigError("unknown config key \"" + dotted_key + "\"");
    j[ptr] = parsed;
    cfg = from_json(j);
}

SynthSpec synth_spec_from_json(const std::string& json_text) {
    const json j = parse_json(json_text);
    SynthSpec spec;
    std::string mode = mode_name(spec.mode);
    Section s(j, "");
    s.get("mode", mode)
        .get("tasks", spec.tasks)
        .get("classes_per_task", spec.classes_per_task)
        .get("train_per_class", spec.train_per_class)
        .get("test_per_class", spec.test_per_class)
        .get("image_size", spec.image_size)
        .get("channels", spec.channels)
        .get("gap", spec.gap)
        .get("noise", spec.noise)
        .get("seed", spec.seed)
        .run();
    spec.mode = parse_mode(mode);
    try {
        spec.validate();
    } catch (const ContractError& e) {
        throw ConfigError(e.what());
    }
    return spec;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
    return synth_spec_from_json(read_file(path, "spec file"));
}

std::string synth_spec_to_json(const SynthSpec& spec) {
    const json j{
        {"mode", mode_name(spec.mode)},
        {"tasks", spec.tasks},
        {"classes_per_task", spec.classes_per_task},
        {"train_per_class", spec.train_per_class},
        {"test_per_class", spec.test_per_class},
        {"image_size", spec.image_size},
        {"channels", spec.channels},
        {"gap", spec.gap},
        {"noise", spec.noise},
        {"seed", spec.seed},
    };
    return j.dump();
}

std::string manifest_to_json(const RunManifest& m) {
    json j{
        {"command", m.command},
        {"version", m.version},
        {"seed", m.seed},
        {"config", json::parse(m.config_json)},
        {"stream", {{"path", m.stream_path}}},
        {"started_at", m.started_at},
        {"finished_at", m.finished_at},
        {"outputs", m.outputs},
    };
    if (!m.stream_spec_json.empty()) j["stream"]["spec"] = json::parse(m.stream_spec_json);
    return j.dump(2) + "\n";
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace analogia
