#include <gtest/gtest.h>

#include <filesystem>

#include "analogia/checkpoint.hpp"
#include "analogia/config.hpp"
#include "analogia/errors.hpp"
#include "analogia/verify.hpp"

using namespace analogia;

namespace {

ExperimentConfig quick_config() {
    ExperimentConfig cfg = desk_experiment_config();
    cfg.seed = 21;
    cfg.prompt.epochs = 2;
    cfg.finetune.epochs = 2;
    cfg.first_task.epochs = 3;
    return cfg;
}

std::map<std::string, std::vector<double>> values(const TinyViT& m) {
    std::map<std::string, std::vector<double>> out;
    for (const auto& p : m.named_parameters()) out[p.name] = p.tensor.to_vector();
    return out;
}

}  // namespace

TEST(Config, EmptyObjectKeepsDefaults) {
    const ExperimentConfig cfg = parse_experiment_config("{}");
    EXPECT_EQ(cfg.M, 6u);
    EXPECT_EQ(cfg.scale, 20.0);
    EXPECT_EQ(cfg.prompt.K, 50u);
    EXPECT_EQ(cfg.prompt.J, 5u);
    EXPECT_EQ(cfg.prompt.omega, 1.0);
    EXPECT_EQ(cfg.finetune.zeta, 2.0);
    EXPECT_FALSE(cfg.finetune.use_kd);
    EXPECT_EQ(cfg.baseline, Baseline::kAnalogical);
}

TEST(Config, JsonRoundTrip) {
    ExperimentConfig cfg = desk_experiment_config();
    cfg.baseline = Baseline::kSdc;
    cfg.seed = 99;
    cfg.instrument_bias = true;
    const std::string text = experiment_config_to_json(cfg);
    EXPECT_EQ(experiment_config_to_json(parse_experiment_config(text)), text);
}

TEST(Config, UnknownKeyIsNamed) {
    try {
        parse_experiment_config(R"({"prompt": {"K": 10, "Kk": 3}})");
        ADD_FAILURE();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("prompt.Kk"), std::string::npos) << e.what();
    }
}

TEST(Config, IllTypedValueIsNamed) {
    try {
        parse_experiment_config(R"({"M": "six"})");
        ADD_FAILURE();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("M"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_experiment_config("{not json"), ConfigError);
}

TEST(Config, InvalidValuesRejected) {
    EXPECT_THROW(parse_experiment_config(R"({"M": 0})"), ConfigError);
    EXPECT_THROW(parse_experiment_config(R"({"prompt": {"K": 0}})"), ConfigError);
    EXPECT_THROW(parse_experiment_config(R"({"baseline": "oracle"})"), ConfigError);
}

TEST(Config, DottedOverrides) {
    ExperimentConfig cfg = desk_experiment_config();
    set_config_value(cfg, "prompt.K", "7");
    set_config_value(cfg, "M", "3");
    set_config_value(cfg, "prompt.Omega", "2.5");
    set_config_value(cfg, "scale", "10");
    EXPECT_EQ(cfg.prompt.K, 7u);
    EXPECT_EQ(cfg.M, 3u);
    EXPECT_EQ(cfg.prompt.omega, 2.5);
    EXPECT_EQ(cfg.scale, 10.0);
    EXPECT_THROW(set_config_value(cfg, "prompt.nope", "1"), ConfigError);
}

TEST(Config, SynthSpecRoundTrip) {
    SynthSpec s = desk_stream_spec(5, 3);
    s.mode = StreamMode::kDIL;
    EXPECT_EQ(synth_spec_from_json(synth_spec_to_json(s)), s);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const ExperimentConfig cfg = quick_config();
    const TaskStream stream = generate(desk_stream_spec(31, 2));
    ContinualState state = make_state(cfg);
    run_task(state, stream.tasks[0], cfg);
    run_task(state, stream.tasks[1], cfg);
    ExperimentConfig back_cfg;
    const std::string bytes = encode_checkpoint(cfg, state);
    const ContinualState back = decode_checkpoint(bytes, &back_cfg);
    EXPECT_EQ(back.store, state.store);
    EXPECT_EQ(back.classes, state.classes);
    EXPECT_EQ(back.tasks_seen, state.tasks_seen);
    EXPECT_EQ(values(back.model), values(state.model));
    EXPECT_EQ(experiment_config_to_json(back_cfg), experiment_config_to_json(cfg));
    EXPECT_EQ(encode_checkpoint(back_cfg, back), bytes);
}

TEST(Checkpoint, ResumingMatchesUninterruptedRun) {
    const ExperimentConfig cfg = quick_config();
    const TaskStream stream = generate(desk_stream_spec(32, 3));
    ContinualState straight = make_state(cfg);
    for (const auto& t : stream.tasks) run_task(straight, t, cfg);

    ContinualState first = make_state(cfg);
    run_task(first, stream.tasks[0], cfg);
    run_task(first, stream.tasks[1], cfg);
    const auto path = std::filesystem::temp_directory_path() / "analogia_resume.ckpt";
    save_checkpoint(path, cfg, first);
    ContinualState resumed = load_checkpoint(path);
    run_task(resumed, stream.tasks[2], cfg);
    std::filesystem::remove(path);

    EXPECT_EQ(resumed.store, straight.store);
    EXPECT_EQ(values(resumed.model), values(straight.model));
    EXPECT_EQ(evaluate(resumed, stream.tasks[0].test), evaluate(straight, stream.tasks[0].test));
}

TEST(Checkpoint, CorruptInputRejected) {
    const ExperimentConfig cfg = quick_config();
    ContinualState state = make_state(cfg);
    run_task(state, generate(desk_stream_spec(33, 1)).tasks[0], cfg);
    std::string bytes = encode_checkpoint(cfg, state);
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() / 2)), ParseError);
    EXPECT_THROW(decode_checkpoint(bytes + "zz"), ParseError);
    std::string bad_version = bytes;
    bad_version[8] = 9;
    EXPECT_THROW(decode_checkpoint(bad_version), VersionError);
    std::string bad_magic = bytes;
    bad_magic[3] = '?';
    EXPECT_THROW(decode_checkpoint(bad_magic), ParseError);
}

TEST(Manifest, CarriesResolvedConfig) {
    RunManifest m;
    m.command = "analogia run";
    m.config_json = experiment_config_to_json(desk_experiment_config());
    m.seed = 4;
    m.outputs = {"summary.csv"};
    const std::string text = manifest_to_json(m);
    for (const char* key : {"\"command\"", "\"config\"", "\"seed\"", "\"version\"", "\"outputs\"", "\"started_at\""})
        EXPECT_NE(text.find(key), std::string::npos) << key;
}
