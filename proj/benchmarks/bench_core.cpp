#include <benchmark/benchmark.h>

#include "analogia/analogy.hpp"
#include "analogia/ops.hpp"
#include "analogia/prototypes.hpp"
#include "analogia/rng.hpp"
#include "analogia/synth.hpp"
#include "analogia/vit.hpp"

using namespace analogia;

namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, bool grad = false) {
    std::vector<double> v(r * c);
    for (auto& x : v) x = rng.normal();
    return Tensor::from({r, c}, std::move(v), grad);
}

Vec random_vec(Rng& rng, std::size_t d) {
    Vec v(d);
    for (auto& x : v) x = rng.normal();
    return v;
}

ViTConfig desk_vit() {
    ViTConfig c;
    c.image_size = 16;
    c.patch_size = 4;
    c.embed_dim = 16;
    c.depth = 2;
    c.heads = 2;
    return c;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    const Tensor a = random_tensor(rng, n, n), b = random_tensor(rng, n, n);
    NoGradGuard no_grad;
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 128)->Complexity(benchmark::oNCubed);

static void BM_MatmulBackward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(2);
    Tensor a = random_tensor(rng, n, n, true), b = random_tensor(rng, n, n, true);
    for (auto _ : state) {
        sum(matmul(a, b)).backward();
        a.clear_grad();
        b.clear_grad();
    }
}
BENCHMARK(BM_MatmulBackward)->Arg(32)->Arg(64);

static void BM_EncodeBatch(benchmark::State& state) {
    TinyViT model(desk_vit(), 3);
    SynthSpec spec;
    spec.tasks = 1;
    spec.train_per_class = static_cast<std::size_t>(state.range(0)) / 2;
    const TaskStream stream = generate(spec);
    const auto images = image_pointers(stream.tasks[0].train);
    APrompt prompt = make_prompt(0, 5, 16, 3);
    const bool prompted = state.range(1) != 0;
    NoGradGuard no_grad;
    for (auto _ : state) benchmark::DoNotOptimize(model.encode_batch(images, prompted ? &prompt.tokens : nullptr));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(images.size()));
}
BENCHMARK(BM_EncodeBatch)->Args({16, 0})->Args({16, 1})->Args({64, 0});

static void BM_SnmpClassify(benchmark::State& state) {
    const auto classes = static_cast<std::size_t>(state.range(0));
    const std::size_t M = 6, D = 16;
    Rng rng(4);
    PrototypeStore store(M, D);
    for (std::size_t y = 0; y < classes; ++y) {
        std::vector<Vec> protos;
        for (std::size_t m = 0; m < M; ++m) protos.push_back(random_vec(rng, D));
        store.register_class(static_cast<ClassId>(y), std::move(protos));
    }
    const Vec query = random_vec(rng, D);
    for (auto _ : state) benchmark::DoNotOptimize(snmp_classify(query, store));
}
BENCHMARK(BM_SnmpClassify)->Arg(10)->Arg(100);

static void BM_EstimateShift(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(5);
    std::vector<FeaturePair> pairs(n);
    for (auto& p : pairs) p = {random_vec(rng, 16), random_vec(rng, 16)};
    const Vec proto = random_vec(rng, 16);
    for (auto _ : state) benchmark::DoNotOptimize(estimate_shift(pairs, proto, 20.0, 0, 0));
}
BENCHMARK(BM_EstimateShift)->Arg(50)->Arg(500);

static void BM_KMeans(benchmark::State& state) {
    Rng rng(6);
    std::vector<Vec> pts;
    for (int i = 0; i < state.range(0); ++i) pts.push_back(random_vec(rng, 16));
    for (auto _ : state) benchmark::DoNotOptimize(kmeans(pts, 6, 7));
}
BENCHMARK(BM_KMeans)->Arg(80)->Arg(400);
BENCHMARK_MAIN();
