#include "analogia/synth.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "analogia/config.hpp"
#include "analogia/errors.hpp"
#include "analogia/rng.hpp"
#include "binary_io.hpp"

namespace analogia {

const char* mode_name(StreamMode mode) { return mode == StreamMode::kCIL ? "cil" : "dil"; }

StreamMode parse_mode(const std::string& text) {
    if (text == "cil" || text == "CIL") return StreamMode::kCIL;
    if (text == "dil" || text == "DIL") return StreamMode::kDIL;
    throw ConfigError("mode must be \"cil\" or \"dil\", got \"" + text + "\"");
}

void SynthSpec::validate() const {
    if (tasks == 0) throw ContractError("synth: tasks must be at least 1");
    if (classes_per_task == 0) throw ContractError("synth: classes_per_task must be at least 1");
    if (train_per_class == 0 || test_per_class == 0) throw ContractError("synth: samples per class must be positive");
    if (image_size < 2) throw ContractError("synth: image_size must be at least 2");
    if (channels == 0) throw ContractError("synth: channels must be positive");
    if (!(gap >= 0.0 && gap <= 1.0)) throw ContractError("synth: gap must be in [0, 1]");
    if (!(noise >= 0.0)) throw ContractError("synth: noise must be non-negative");
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kContextAmplitude = 1.5;

enum class Family { kGrating, kBlobs, kRings, kChecker };

struct Pattern {
    Family family = Family::kGrating;
    double freq = 2.0;
    double angle = 0.0;
    double phase = 0.0;
    double cx = 0.0, cy = 0.0;
    double bx[3]{}, by[3]{}, bs[3]{}, bw[3]{};
    double channel_gain[4]{1.0, 1.0, 1.0, 1.0};
};

Pattern draw_pattern(Rng& rng, Family family, double freq_lo, double freq_hi) {
    Pattern p;
    p.family = family;
    p.freq = rng.uniform(freq_lo, freq_hi);
    p.angle = rng.uniform(0.0, std::numbers::pi);
    p.phase = rng.uniform(0.0, kTwoPi);
    p.cx = rng.uniform(-0.2, 0.2);
    p.cy = rng.uniform(-0.2, 0.2);
    for (int i = 0; i < 3; ++i) {
        p.bx[i] = rng.uniform(-0.35, 0.35);
        p.by[i] = rng.uniform(-0.35, 0.35);
        p.bs[i] = rng.uniform(0.08, 0.18);
        p.bw[i] = rng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0;
    }
    for (double& g : p.channel_gain) g = rng.uniform(0.6, 1.0);
    return p;
}

// Per-sample perturbation; all zero yields the archetype.
struct Jitter {
    double phase = 0.0;
    double dx = 0.0, dy = 0.0;
    double gain = 1.0;
};

double eval_pattern(const Pattern& p, double u, double v, const Jitter& j) {
    u -= j.dx;
    v -= j.dy;
    switch (p.family) {
        case Family::kGrating:
            return std::sin(kTwoPi * p.freq * (u * std::cos(p.angle) + v * std::sin(p.angle)) + p.phase + j.phase);
        case Family::kBlobs: {
            double s = 0.0;
            for (int i = 0; i < 3; ++i) {
                const double r2 = (u - p.bx[i]) * (u - p.bx[i]) + (v - p.by[i]) * (v - p.by[i]);
                s += p.bw[i] * std::exp(-r2 / (2.0 * p.bs[i] * p.bs[i]));
            }
            return s;
        }
        case Family::kRings: {
            const double r = std::hypot(u - p.cx, v - p.cy);
            return std::cos(kTwoPi * p.freq * r + p.phase + j.phase);
        }
        case Family::kChecker:
            return std::sin(kTwoPi * p.freq * u + p.phase + j.phase) * std::sin(kTwoPi * p.freq * v + p.angle);
    }
    return 0.0;
}

struct StreamPlan {
    std::vector<Pattern> classes;   // by global class index
    std::vector<Pattern> contexts;  // by task
    std::vector<double> rotations;  // by task, DIL only
};

StreamPlan make_plan(const SynthSpec& spec) {
    StreamPlan plan;
    const std::size_t n_classes =
        spec.mode == StreamMode::kCIL ? spec.tasks * spec.classes_per_task : spec.classes_per_task;
    for (std::size_t g = 0; g < n_classes; ++g) {
        Rng rng = Rng::substream(spec.seed, "class", g);
        plan.classes.push_back(draw_pattern(rng, static_cast<Family>(g % 4), 1.5, 3.5));
    }
    for (std::size_t t = 0; t < spec.tasks; ++t) {
        Rng rng = Rng::substream(spec.seed, "context", t);
        plan.contexts.push_back(draw_pattern(rng, static_cast<Family>((t + 1) % 4), 0.6, 1.4));
        plan.rotations.push_back(t == 0 ? 0.0 : rng.uniform(0.5, 1.0) * std::numbers::pi / 2.0);
    }
    return plan;
}

Image render(const SynthSpec& spec, const StreamPlan& plan, std::size_t task, std::size_t cls, const Jitter& j,
             Rng* pixel_noise) {
    const std::size_t g = spec.mode == StreamMode::kCIL ? task * spec.classes_per_task + cls : cls;
    const Pattern& base = plan.classes[g];
    const Pattern& ctx = plan.contexts[task];
    const double rot = spec.mode == StreamMode::kDIL ? spec.gap * plan.rotations[task] : 0.0;
    const double cr = std::cos(rot), sr = std::sin(rot);
    const double w_ctx = spec.gap * kContextAmplitude;
    const Jitter none;

    Image img;
    img.height = img.width = spec.image_size;
    img.channels = spec.channels;
    img.pixels.resize(spec.image_size * spec.image_size * spec.channels);
    const double inv = 1.0 / static_cast<double>(spec.image_size);
    for (std::size_t y = 0; y < spec.image_size; ++y) {
        for (std::size_t x = 0; x < spec.image_size; ++x) {
            const double u = (static_cast<double>(x) + 0.5) * inv - 0.5;
            const double v = (static_cast<double>(y) + 0.5) * inv - 0.5;
            const double ru = cr * u - sr * v, rv = sr * u + cr * v;
            const double b = j.gain * eval_pattern(base, ru, rv, j);
            const double c = w_ctx * eval_pattern(ctx, u, v, none);
            for (std::size_t ch = 0; ch < spec.channels; ++ch) {
                double value = base.channel_gain[ch % 4] * b + ctx.channel_gain[ch % 4] * c;
                if (pixel_noise) value += spec.noise * pixel_noise->normal();
                img.pixels[(y * spec.image_size + x) * spec.channels + ch] = value;
            }
        }
    }
    return img;
}

Jitter draw_jitter(double noise, Rng& rng) {
    Jitter j;
    j.phase = noise * rng.normal() * 2.0;
    j.dx = noise * rng.normal() * 0.1;
    j.dy = noise * rng.normal() * 0.1;
    j.gain = 1.0 + noise * rng.normal() * 0.5;
    return j;
}

}  // namespace

TaskStream generate(const SynthSpec& spec) {
    spec.validate();
    const StreamPlan plan = make_plan(spec);
    TaskStream stream;
    stream.spec = spec;
    std::uint64_t next_id = 0;
    for (std::size_t t = 0; t < spec.tasks; ++t) {
        Task task;
        for (std::size_t c = 0; c < spec.classes_per_task; ++c) {
            task.labels.push_back(static_cast<ClassId>(spec.mode == StreamMode::kCIL ? t * spec.classes_per_task + c : c));
        }
        auto fill = [&](std::vector<Sample>& out, std::size_t per_class, std::string_view split) {
            for (std::size_t c = 0; c < spec.classes_per_task; ++c) {
                Rng rng = Rng::substream(spec.seed, split, t * 1000003ull + c);
                for (std::size_t i = 0; i < per_class; ++i) {
                    Sample s;
                    s.id = next_id++;
                    s.label = task.labels[c];
                    const Jitter j = draw_jitter(spec.noise, rng);
                    s.image = render(spec, plan, t, c, j, &rng);
                    out.push_back(std::move(s));
                }
            }
        };
        fill(task.train, spec.train_per_class, "train");
        fill(task.test, spec.test_per_class, "test");
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

Image render_archetype(const SynthSpec& spec, std::size_t task, std::size_t class_in_task) {
    spec.validate();
    if (task >= spec.tasks || class_in_task >= spec.classes_per_task) {
        throw ContractError("render_archetype: index out of range");
    }
    return render(spec, make_plan(spec), task, class_in_task, Jitter{}, nullptr);
}

double mean_intertask_archetype_distance(const SynthSpec& spec) {
    spec.validate();
    if (spec.tasks < 2) throw ContractError("mean_intertask_archetype_distance: needs at least two tasks");
    const StreamPlan plan = make_plan(spec);
    std::vector<std::vector<Image>> arch(spec.tasks);
    for (std::size_t t = 0; t < spec.tasks; ++t)
        for (std::size_t c = 0; c < spec.classes_per_task; ++c)
            arch[t].push_back(render(spec, plan, t, c, Jitter{}, nullptr));
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t t1 = 0; t1 < spec.tasks; ++t1)
        for (std::size_t t2 = t1 + 1; t2 < spec.tasks; ++t2)
            for (const auto& a : arch[t1])
                for (const auto& b : arch[t2]) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < a.pixels.size(); ++i) s += (a.pixels[i] - b.pixels[i]) * (a.pixels[i] - b.pixels[i]);
                    total += std::sqrt(s);
                    ++pairs;
                }
    return total / static_cast<double>(pairs);
}

namespace {

constexpr std::string_view kStreamMagic = "ANLGSTRM";

void write_samples(binio::Writer& w, const std::vector<Sample>& samples) {
    w.u32(static_cast<std::uint32_t>(samples.size()));
    for (const auto& s : samples) {
        w.u64(s.id);
        w.i32(s.label);
        w.u32(static_cast<std::uint32_t>(s.image.height));
        w.u32(static_cast<std::uint32_t>(s.image.width));
        w.u32(static_cast<std::uint32_t>(s.image.channels));
        for (double p : s.image.pixels) w.f64(p);
    }
}

std::vector<Sample> read_samples(binio::Reader& r) {
    const std::uint32_t n = r.count("sample count", 24);
    std::vector<Sample> out;
    out.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        Sample s;
        s.id = r.u64("sample id");
        s.label = r.i32("sample label");
        const std::size_t at = r.offset();
        s.image.height = r.u32("image height");
        s.image.width = r.u32("image width");
        s.image.channels = r.u32("image channels");
        const std::uint64_t px = static_cast<std::uint64_t>(s.image.height) * s.image.width * s.image.channels;
        if (px == 0 || px > r.remaining() / 8) r.fail("implausible image dimensions", at);
        s.image.pixels.resize(px);
        for (auto& p : s.image.pixels) p = r.f64("pixel data");
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

std::string encode_stream(const TaskStream& stream) {
    binio::Writer w;
    w.bytes(kStreamMagic);
    w.u32(kStreamFormatVersion);
    w.str(synth_spec_to_json(stream.spec));
    w.u8(stream.mode() == StreamMode::kCIL ? 0 : 1);
    w.u32(static_cast<std::uint32_t>(stream.tasks.size()));
    for (const auto& task : stream.tasks) {
        w.u32(static_cast<std::uint32_t>(task.labels.size()));
        for (auto l : task.labels) w.i32(l);
        write_samples(w, task.train);
        write_samples(w, task.test);
    }
    return w.take();
}

TaskStream decode_stream(const std::string& bytes) {
    binio::Reader r(bytes);
    if (r.remaining() < kStreamMagic.size() || r.bytes(kStreamMagic.size(), "magic") != kStreamMagic) {
        throw ParseError("not a task stream file (bad magic)", 0);
    }
    const std::uint32_t version = r.u32("format version");
    if (version != kStreamFormatVersion) {
        throw VersionError("unsupported stream format version " + std::to_string(version) + " (expected " +
                           std::to_string(kStreamFormatVersion) + ")");
    }
    TaskStream stream;
    const std::size_t spec_at = r.offset();
    const std::string spec_json = r.str("spec header");
    try {
        stream.spec = synth_spec_from_json(spec_json);
    } catch (const ConfigError& e) {
        throw ParseError(std::string("invalid spec header: ") + e.what(), spec_at);
    }
    const std::size_t mode_at = r.offset();
    const std::uint8_t mode = r.u8("mode");
    if (mode > 1) r.fail("unknown mode byte " + std::to_string(mode), mode_at);
    if ((mode == 0) != (stream.spec.mode == StreamMode::kCIL)) r.fail("mode byte disagrees with spec header", mode_at);
    const std::uint32_t n_tasks = r.count("task count", 12);
    for (std::uint32_t t = 0; t < n_tasks; ++t) {
        Task task;
        const std::uint32_t n_labels = r.count("label count", 4);
        for (std::uint32_t i = 0; i < n_labels; ++i) task.labels.push_back(r.i32("label"));
        task.train = read_samples(r);
        task.test = read_samples(r);
        stream.tasks.push_back(std::move(task));
    }
    if (!r.done()) r.fail("trailing bytes after stream payload", r.offset());
    return stream;
}

void save_stream(const TaskStream& stream, const std::filesystem::path& path) {
    const std::string bytes = encode_stream(stream);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

TaskStream load_stream(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open stream file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_stream(ss.str());
}

}  // namespace analogia
