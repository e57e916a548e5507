// analogia: experiment driver for the prototype-based continual learner.
//
//   analogia gen     --config spec.json --out stream.bin
//   analogia run     --config cfg.json --stream stream.bin --out runs/a
//   analogia compare --config cfg.json --stream stream.bin --out runs/cmp
//   analogia sweep   --config cfg.json --stream stream.bin --out runs/k --param K --values 10,20,50
//   analogia verify  --out runs/verify [--quick]

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "analogia/checkpoint.hpp"
#include "analogia/config.hpp"
#include "analogia/continual.hpp"
#include "analogia/errors.hpp"
#include "analogia/metrics.hpp"
#include "analogia/synth.hpp"
#include "analogia/verify.hpp"

namespace fs = std::filesystem;
using namespace analogia;

namespace {

struct Common {
    std::string config;
    std::string stream;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> baseline;
    std::optional<std::size_t> workers;
};

std::string g_command_line;

// flag > ANALOGIA_THREADS > config file
void apply_overrides(ExperimentConfig& cfg, const Common& c) {
    if (c.seed) cfg.seed = *c.seed;
    if (c.baseline) cfg.baseline = parse_baseline(*c.baseline);
    if (c.workers) {
        cfg.workers = *c.workers;
    } else if (const char* env = std::getenv("ANALOGIA_THREADS"); env && *env) {
        cfg.workers = default_workers();
    }
    cfg.validate();
}

std::string conversions_csv(const std::vector<ConversionRecord>& recs) {
    std::string out = "task,class,subset_size,rate,initial_loss,final_loss\n";
    for (const auto& r : recs) {
        out += std::to_string(r.task) + ',' + std::to_string(r.class_id) + ',' + std::to_string(r.subset_size) + ',' +
               format_double(r.rate) + ',' + format_double(r.initial_loss) + ',' + format_double(r.final_loss) + '\n';
    }
    return out;
}

std::string audit_csv(const std::vector<TaskAudit>& audits) {
    std::string out =
        "task,classes,prototype_floats,expected_prototype_floats,model_parameters,prompts_trained,prompts_alive\n";
    for (const auto& a : audits) {
        out += std::to_string(a.task) + ',' + std::to_string(a.classes) + ',' + std::to_string(a.prototype_floats) +
               ',' + std::to_string(a.expected_prototype_floats) + ',' + std::to_string(a.model_parameters) + ',' +
               std::to_string(a.prompts_trained) + ',' + std::to_string(a.prompts_alive) + '\n';
    }
    return out;
}

// One full stream run into `dir`. Returns the summary row.
RunSummary run_into(const ExperimentConfig& cfg, const TaskStream& stream, const std::string& stream_path,
                    const fs::path& dir, const std::string& command) {
    fs::create_directories(dir / "checkpoints");
    RunManifest manifest;
    manifest.command = command;
    manifest.config_json = experiment_config_to_json(cfg);
    manifest.seed = cfg.seed;
    manifest.stream_path = stream_path;
    manifest.stream_spec_json = synth_spec_to_json(stream.spec);
    manifest.started_at = utc_timestamp();

    const std::size_t total = stream.tasks.size();
    std::vector<std::string> outputs;
    const RunResult run = run_stream(cfg, stream, [&](std::size_t t, const ContinualState& state) {
        char name[32];
        std::snprintf(name, sizeof name, "task_%03zu.ckpt", t);
        save_checkpoint(dir / "checkpoints" / name, cfg, state);
        outputs.push_back((fs::path("checkpoints") / name).string());
        std::fprintf(stderr, "  [%s seed %llu] task %zu/%zu done\n", baseline_name(cfg.baseline),
                     static_cast<unsigned long long>(cfg.seed), t, total);
    });

    const RunSummary summary = summarize(run.accuracy, cfg.seed, baseline_name(cfg.baseline));
    emit_results(dir, run.accuracy, summary, run.bias);
    write_text_file(dir / "conversions.csv", conversions_csv(run.conversions));
    write_text_file(dir / "audit.csv", audit_csv(run.audits));
    for (const char* f : {"accuracy_matrix.csv", "summary.csv", "bias.csv", "conversions.csv", "audit.csv"}) {
        outputs.emplace_back(f);
    }
    manifest.outputs = outputs;
    manifest.finished_at = utc_timestamp();
    write_text_file(dir / "manifest.json", manifest_to_json(manifest));
    return summary;
}

void print_summary(const RunSummary& s) {
    std::printf("%-10s seed %-4llu FAA %.4f  FF %s\n", s.baseline.c_str(), static_cast<unsigned long long>(s.seed),
                s.faa, std::isnan(s.ff) ? "nan" : std::to_string(s.ff).c_str());
}

int cmd_gen(const Common& c) {
    SynthSpec spec = load_synth_spec(c.config);
    if (c.seed) spec.seed = *c.seed;
    const TaskStream stream = generate(spec);
    const fs::path out(c.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_stream(stream, out);
    std::size_t train = 0, test = 0;
    for (const auto& t : stream.tasks) {
        train += t.train.size();
        test += t.test.size();
    }
    std::printf("wrote %s: %s, %zu tasks, %zu train / %zu test samples\n", c.out.c_str(), mode_name(spec.mode),
                stream.tasks.size(), train, test);
    return 0;
}

int cmd_run(const Common& c) {
    ExperimentConfig cfg = load_experiment_config(c.config);
    apply_overrides(cfg, c);
    const TaskStream stream = load_stream(c.stream);
    print_summary(run_into(cfg, stream, c.stream, c.out, g_command_line));
    return 0;
}

int cmd_compare(const Common& c, std::size_t seeds) {
    ExperimentConfig base = load_experiment_config(c.config);
    apply_overrides(base, c);
    const TaskStream stream = load_stream(c.stream);
    std::vector<RunSummary> rows;
    for (std::size_t k = 0; k < seeds; ++k) {
        for (Baseline b : {Baseline::kAnalogical, Baseline::kSdc, Baseline::kNone}) {
            ExperimentConfig cfg = base;
            cfg.seed = base.seed + k;
            cfg.baseline = b;
            const fs::path dir = fs::path(c.out) / (std::string(baseline_name(b)) + "_seed" + std::to_string(cfg.seed));
            rows.push_back(run_into(cfg, stream, c.stream, dir, g_command_line));
            print_summary(rows.back());
        }
    }
    write_text_file(fs::path(c.out) / "summary.csv", summary_csv(rows));
    return 0;
}

const char* sweep_key(const std::string& param) {
    if (param == "K") return "prompt.K";
    if (param == "J") return "prompt.J";
    if (param == "M") return "M";
    if (param == "scale") return "scale";
    if (param == "Omega") return "prompt.Omega";
    throw ConfigError("sweep parameter must be one of K, J, M, scale, Omega (got \"" + param + "\")");
}

int cmd_sweep(const Common& c, const std::string& param, const std::vector<std::string>& values) {
    const char* key = sweep_key(param);
    ExperimentConfig base = load_experiment_config(c.config);
    apply_overrides(base, c);
    const TaskStream stream = load_stream(c.stream);
    std::string table = "param,value,faa,ff,seed,baseline\n";
    for (const auto& v : values) {
        ExperimentConfig cfg = base;
        set_config_value(cfg, key, v);
        const RunSummary s = run_into(cfg, stream, c.stream, fs::path(c.out) / (param + "=" + v), g_command_line);
        std::printf("%s=%-6s ", param.c_str(), v.c_str());
        print_summary(s);
        table += param + ',' + v + ',' + format_double(s.faa) + ',' + format_double(s.ff) + ',' +
                 std::to_string(s.seed) + ',' + s.baseline + '\n';
    }
    write_text_file(fs::path(c.out) / "sweep.csv", table);
    return 0;
}

int cmd_verify(const Common& c, bool quick, std::size_t seeds) {
    VerifyOptions opts;
    if (!c.config.empty()) opts.config = load_experiment_config(c.config);
    opts.quick = quick;
    opts.seeds = seeds;
    opts.workers = c.workers ? *c.workers : default_workers();
    std::string report;
    opts.on_result = [&](const CriterionResult& r) {
        const std::string line = format_result(r);
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
        report += line + '\n';
    };
    const auto results = run_acceptance(opts);
    bool ok = true;
    for (const auto& r : results) ok = ok && (r.passed || r.skipped);
    if (!c.out.empty()) {
        fs::create_directories(c.out);
        write_text_file(fs::path(c.out) / "verify.txt", report);
    }
    std::printf("%s\n", ok ? "verify: all criteria passed" : "verify: FAILED");
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    for (int i = 0; i < argc; ++i) g_command_line += (i ? " " : "") + std::string(argv[i]);

    CLI::App app{"analogia: rehearsal-free continual learning with analogical prompts"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    Common c;
    std::size_t seeds = 1, verify_seeds = 5;
    std::string param;
    std::vector<std::string> values;
    bool quick = false;

    auto add_common = [&](CLI::App* sub, bool needs_stream) {
        sub->add_option("--config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        if (needs_stream) sub->add_option("--stream", c.stream, "stream file from `gen`")->required();
        sub->add_option("--out", c.out, "output directory")->required();
        sub->add_option("--seed", c.seed, "root seed override");
        sub->add_option("--baseline", c.baseline, "analogical, sdc or none");
        sub->add_option("--workers", c.workers, "prompt-training threads (default: ANALOGIA_THREADS)")
            ->check(CLI::PositiveNumber);
    };

    auto* gen = app.add_subcommand("gen", "generate a synthetic task stream");
    gen->add_option("--config", c.config, "stream spec (JSON)")->required()->check(CLI::ExistingFile);
    gen->add_option("--out", c.out, "stream file to write")->required();
    gen->add_option("--seed", c.seed, "data seed override");

    auto* run = app.add_subcommand("run", "run one method over a stream");
    add_common(run, true);

    auto* compare = app.add_subcommand("compare", "run analogical, sdc and none side by side");
    add_common(compare, true);
    compare->add_option("--seeds", seeds, "number of consecutive seeds")->check(CLI::PositiveNumber);

    auto* sweep = app.add_subcommand("sweep", "vary one hyperparameter");
    add_common(sweep, true);
    sweep->add_option("--param", param, "K, J, M, scale or Omega")->required();
    sweep->add_option("--values", values, "comma separated values")->required()->delimiter(',');

    auto* verify = app.add_subcommand("verify", "run the acceptance suite");
    verify->add_option("--out", c.out, "directory for verify.txt");
    verify->add_option("--config", c.config, "override the desk-scale experiment config")->check(CLI::ExistingFile);
    verify->add_option("--workers", c.workers, "prompt-training threads")->check(CLI::PositiveNumber);
    verify->add_option("--seeds", verify_seeds, "seeds for the stream criteria")->check(CLI::Range(5, 100));
    verify->add_flag("--quick", quick, "structural criteria only");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return cmd_gen(c);
        if (*run) return cmd_run(c);
        if (*compare) return cmd_compare(c, seeds);
        if (*sweep) return cmd_sweep(c, param, values);
        if (*verify) return cmd_verify(c, quick, verify_seeds);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const VersionError& e) {
        std::fprintf(stderr, "version error: %s\n", e.what());
        return 3;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "parse error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
