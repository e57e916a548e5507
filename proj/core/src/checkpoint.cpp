#include "analogia/checkpoint.hpp"

#include "analogia/config.hpp"
#include "analogia/errors.hpp"
#include "analogia/metrics.hpp"
#include "analogia/rng.hpp"
#include "binary_io.hpp"

namespace analogia {

namespace {

constexpr std::string_view kMagic = "ANLGCKPT";

}  // namespace

std::string encode_checkpoint(const ExperimentConfig& cfg, const ContinualState& state) {
    binio::Writer w;
    w.bytes(kMagic);
    w.u32(kCheckpointVersion);
    w.str(experiment_config_to_json(cfg));
    w.u64(state.tasks_seen);
    w.u8(static_cast<std::uint8_t>(state.model.stage()));
    w.u32(static_cast<std::uint32_t>(state.classes.size()));
    for (ClassId y : state.classes) w.i32(y);

    const auto params = state.model.named_parameters();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(t.dim()));
        for (auto d : t.shape()) w.u64(d);
        for (double v : t.data()) w.f64(v);
    }

    const auto& store = state.store;
    w.u64(store.prototypes_per_class());
    w.u64(store.dim());
    w.f64(store.scale());
    w.u32(static_cast<std::uint32_t>(store.num_classes()));
    for (ClassId y : store.class_ids()) {
        w.i32(y);
        for (const auto& phi : store.prototypes(y))
            for (double v : phi) w.f64(v);
    }
    return w.take();
}

ContinualState decode_checkpoint(const std::string& bytes, ExperimentConfig* cfg_out) {
    binio::Reader r(bytes);
    if (r.remaining() < kMagic.size() || r.bytes(kMagic.size(), "magic") != kMagic) {
        throw ParseError("not a checkpoint file (bad magic)", 0);
    }
    const std::uint32_t version = r.u32("format version");
    if (version != kCheckpointVersion) {
        throw VersionError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                           std::to_string(kCheckpointVersion) + ")");
    }
    const std::size_t cfg_at = r.offset();
    ExperimentConfig cfg;
    try {
        cfg = parse_experiment_config(r.str("config"));
    } catch (const ConfigError& e) {
        throw ParseError(std::string("invalid embedded config: ") + e.what(), cfg_at);
    }
    ContinualState state = make_state(cfg);
    state.tasks_seen = r.u64("task counter");
    const std::size_t stage_at = r.offset();
    const std::uint8_t stage = r.u8("stage");
    if (stage > static_cast<std::uint8_t>(Stage::kFull)) r.fail("unknown stage byte", stage_at);
    const std::uint32_t n_classes = r.count("class count", 4);
    for (std::uint32_t i = 0; i < n_classes; ++i) state.classes.push_back(r.i32("class id"));

    const std::uint32_t n_params = r.count("parameter count", 8);
    std::vector<NamedTensor> params;
    for (std::uint32_t i = 0; i < n_params; ++i) {
        NamedTensor nt;
        nt.name = r.str("parameter name");
        const std::size_t shape_at = r.offset();
        const std::uint32_t rank = r.count("parameter rank", 8);
        Shape shape;
        std::uint64_t numel = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            const std::uint64_t d = r.u64("parameter dim");
            if (d == 0 || d > r.remaining()) r.fail("implausible parameter shape", shape_at);
            shape.push_back(d);
            numel *= d;
        }
        if (rank == 0 || numel > r.remaining() / 8) r.fail("implausible parameter shape", shape_at);
        std::vector<double> data(numel);
        for (auto& v : data) v = r.f64("parameter data");
        nt.tensor = Tensor::from(std::move(shape), std::move(data));
        params.push_back(std::move(nt));
    }
    const std::size_t params_end = r.offset();
    try {
        state.model.load_parameters(params);
    } catch (const std::logic_error& e) {
        throw ParseError(std::string("parameters do not fit the model: ") + e.what(), params_end);
    }
    if (state.model.num_classes() != state.classes.size()) r.fail("head size disagrees with class list", params_end);
    state.model.set_stage(static_cast<Stage>(stage));

    const std::size_t store_at = r.offset();
    const std::uint64_t m = r.u64("prototype count");
    const std::uint64_t d = r.u64("prototype dim");
    const double scale = r.f64("distance scale");
    if (m != cfg.M || d != cfg.vit.embed_dim || scale != cfg.scale) r.fail("prototype store disagrees with config", store_at);
    const std::uint32_t n_store = r.count("stored class count", 4 + m * d * 8);
    for (std::uint32_t i = 0; i < n_store; ++i) {
        const std::size_t at = r.offset();
        const ClassId y = r.i32("stored class id");
        std::vector<Vec> protos(m, Vec(d));
        for (auto& phi : protos)
            for (auto& v : phi) v = r.f64("prototype data");
        try {
            state.store.register_class(y, std::move(protos));
        } catch (const ContractError& e) {
            throw ParseError(e.what(), at);
        }
    }
    if (!r.done()) r.fail("trailing bytes after checkpoint payload", r.offset());
    if (cfg_out) *cfg_out = cfg;
    return state;
}

void save_checkpoint(const std::filesystem::path& path, const ExperimentConfig& cfg, const ContinualState& state) {
    write_text_file(path, encode_checkpoint(cfg, state));
}

ContinualState load_checkpoint(const std::filesystem::path& path, ExperimentConfig* cfg_out) {
    return decode_checkpoint(read_text_file(path), cfg_out);
}

}  // namespace analogia
