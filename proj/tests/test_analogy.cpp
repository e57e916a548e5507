#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "analogia/analogy.hpp"
#include "analogia/continual.hpp"
#include "analogia/errors.hpp"
#include "analogia/gradcheck.hpp"
#include "analogia/ops.hpp"
#include "analogia/rng.hpp"
#include "analogia/verify.hpp"

using namespace analogia;

namespace {

Vec random_vec(Rng& rng, std::size_t d) {
    Vec v(d);
    for (auto& x : v) x = rng.normal();
    return v;
}

Tensor rows_tensor(const std::vector<Vec>& rows, bool grad = false) {
    std::vector<double> data;
    for (const auto& r : rows) data.insert(data.end(), r.begin(), r.end());
    return Tensor::from({rows.size(), rows.front().size()}, std::move(data), grad);
}

ViTConfig tiny_vit() {
    ViTConfig c;
    c.image_size = 4;
    c.patch_size = 2;
    c.embed_dim = 8;
    c.depth = 1;
    c.heads = 2;
    return c;
}

std::vector<Image> random_images(Rng& rng, std::size_t n, std::size_t size = 4) {
    std::vector<Image> out;
    for (std::size_t i = 0; i < n; ++i) {
        Image img{size, size, 1, std::vector<double>(size * size)};
        for (auto& p : img.pixels) p = rng.uniform(-1, 1);
        out.push_back(std::move(img));
    }
    return out;
}

std::vector<const Image*> pointers(const std::vector<Image>& imgs) {
    std::vector<const Image*> out;
    for (auto& i : imgs) out.push_back(&i);
    return out;
}

}  // namespace

TEST(KnnSubset, LargeKReturnsEverything) {
    Rng rng(1);
    std::vector<Vec> f;
    for (int i = 0; i < 7; ++i) f.push_back(random_vec(rng, 3));
    auto idx = select_knn_subset(f, random_vec(rng, 3), 50, 20.0);
    std::sort(idx.begin(), idx.end());
    std::vector<std::size_t> all(7);
    std::iota(all.begin(), all.end(), 0);
    EXPECT_EQ(idx, all);
}

TEST(KnnSubset, KOneIsExhaustiveArgmin) {
    Rng rng(2);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Vec> f;
        for (int i = 0; i < 25; ++i) f.push_back(random_vec(rng, 4));
        Vec proto = random_vec(rng, 4);
        std::size_t best = 0;
        for (std::size_t i = 1; i < f.size(); ++i)
            if (distance(f[i], proto) < distance(f[best], proto)) best = i;
        EXPECT_EQ(select_knn_subset(f, proto, 1, 20.0), std::vector<std::size_t>{best});
    }
}

TEST(KnnSubset, TieAtBoundaryKeepsLowerIndex) {
    // indices 1 and 3 are at the same distance; only one fits
    std::vector<Vec> f{{0, 1}, {1, 1}, {1, 0}, {2, 2}, {-1, 0}};
    EXPECT_EQ(select_knn_subset(f, Vec{1, 0}, 2, 20.0), (std::vector<std::size_t>{2, 1}));
}

TEST(KnnSubset, ModelOverloadUsesOldFeatures) {
    TinyViT m(tiny_vit(), 3);
    Rng rng(3);
    auto imgs = random_images(rng, 9);
    std::vector<Sample> samples;
    for (std::size_t i = 0; i < imgs.size(); ++i) samples.push_back({i, 0, imgs[i]});
    auto feats = extract_features(m, pointers(imgs));
    Vec proto = random_vec(rng, 8);
    EXPECT_EQ(select_knn_subset(m, samples, proto, 4, 20.0), select_knn_subset(feats, proto, 4, 20.0));
}

TEST(ClassSubset, UnionWithNearestSelectingPrototype) {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Vec> f;
        for (int i = 0; i < 30; ++i) f.push_back(random_vec(rng, 3));
        std::vector<Vec> protos{random_vec(rng, 3), random_vec(rng, 3), random_vec(rng, 3)};
        const std::size_t K = 1 + rng.index(12);
        auto sub = build_class_subset(f, protos, K, 20.0);

        std::vector<std::vector<std::size_t>> chosen;
        for (auto& p : protos) chosen.push_back(select_knn_subset(f, p, K, 20.0));
        std::vector<std::size_t> want_samples, want_target;
        for (std::size_t i = 0; i < f.size(); ++i) {
            std::size_t target = protos.size();
            for (std::size_t m = 0; m < protos.size(); ++m) {
                if (std::find(chosen[m].begin(), chosen[m].end(), i) == chosen[m].end()) continue;
                if (target == protos.size() || distance(f[i], protos[m]) < distance(f[i], protos[target])) target = m;
            }
            if (target == protos.size()) continue;
            want_samples.push_back(i);
            want_target.push_back(target);
        }
        EXPECT_EQ(sub.samples, want_samples);
        EXPECT_EQ(sub.target, want_target);
    }
}

TEST(LossCC, CertainTargetIsZero) {
    EXPECT_EQ(loss_cc(Tensor::matrix({{0, 1, 0}, {0, 1, 0}}), 1).item(), 0.0);
}

TEST(LossCC, InverseOfLog) {
    EXPECT_NEAR(loss_cc(Tensor::matrix({{std::exp(-1.0), 1 - std::exp(-1.0)}}), 0).item(), 1.0, 1e-15);
}

TEST(LossCC, TwoRowsByHand) {
    auto probs = Tensor::matrix({{0.5, 0.5}, {0.75, 0.25}});
    EXPECT_NEAR(loss_cc(probs, 1).item(), (std::log(2.0) + std::log(4.0)) / 2, 1e-15);
    EXPECT_NEAR(loss_cc(probs, 1).item(), 1.03972, 1e-5);
}

TEST(LossCC, TargetOutsideHeadRejected) {
    EXPECT_THROW(loss_cc(Tensor::matrix({{0.5, 0.5}}), 2), ContractError);
}

TEST(LossPP, AlignedFeaturesAreFree) {
    Vec phi{0.3, -1.2, 2.0};
    std::vector<Vec> feats;
    for (double c : {0.1, 1.0, 7.5}) {
        Vec f = phi;
        for (auto& x : f) x *= c;
        feats.push_back(f);
    }
    EXPECT_NEAR(loss_pp(rows_tensor(feats), rows_tensor({phi}), 20.0).item(), 0.0, 1e-12);
}

TEST(LossPP, OrthogonalUnitFeature) {
    EXPECT_NEAR(loss_pp(Tensor::matrix({{0, 1}}), Tensor::matrix({{1, 0}}), 20.0).item(), 20 * std::sqrt(2.0), 1e-12);
}

TEST(LossPP, BroadcastTargetMatchesRepeatedRows) {
    Rng rng(5);
    std::vector<Vec> feats{random_vec(rng, 4), random_vec(rng, 4), random_vec(rng, 4)};
    Vec phi = random_vec(rng, 4);
    EXPECT_NEAR(loss_pp(rows_tensor(feats), rows_tensor({phi}), 20.0).item(),
                loss_pp(rows_tensor(feats), rows_tensor({phi, phi, phi}), 20.0).item(), 1e-12);
}

TEST(LossDE, SpreadFeaturesAreFree) {
    EXPECT_EQ(loss_de(Tensor::matrix({{1, 0}, {0, 1}, {-1, -1}}), 1.0, 20.0).item(), 0.0);
}

TEST(LossDE, IdenticalPairCostsOmega) {
    // one pair, hinge 1 - 0 = 1, normalized by N(N-1) = 2
    EXPECT_NEAR(loss_de(Tensor::matrix({{1, 2}, {1, 2}}), 1.0, 20.0).item(), 0.5, 1e-15);
}

TEST(LossDE, ThreeFeaturesAtKnownDistances) {
    // unit vectors with scaled chords 0.5 (1-2), 2.0 (1-3) and 2.0 (2-3) at scale 20
    const double scale = 20.0;
    const double s = 0.5 / scale / 2;  // half chord between 1 and 2
    const double ca = std::sqrt(1 - s * s);
    const double cb = (1 - std::pow(2.0 / scale, 2) / 2) / ca;
    Vec u1{ca, s, 0}, u2{ca, -s, 0}, u3{cb, 0, std::sqrt(1 - cb * cb)};
    ASSERT_NEAR(distance(u1, u2, scale), 0.5, 1e-9);
    ASSERT_NEAR(distance(u1, u3, scale), 2.0, 1e-9);
    ASSERT_NEAR(distance(u2, u3, scale), 2.0, 1e-9);
    EXPECT_NEAR(loss_de(rows_tensor({u1, u2, u3}), 1.0, scale).item(), 0.5 / 6.0, 1e-9);
}

TEST(LossDE, SingleFeatureRejected) { EXPECT_THROW(loss_de(Tensor::matrix({{1, 2}}), 1.0, 20.0), ContractError); }

TEST(PromptLosses, NonnegativeAndPermutationInvariant) {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Vec> feats, targets;
        std::vector<Vec> probs;
        for (int i = 0; i < 5; ++i) {
            feats.push_back(random_vec(rng, 4));
            targets.push_back(random_vec(rng, 4));
            Vec p{rng.uniform(0.01, 1), rng.uniform(0.01, 1), rng.uniform(0.01, 1)};
            const double z = p[0] + p[1] + p[2];
            for (auto& x : p) x /= z;
            probs.push_back(p);
        }
        const double omega = rng.uniform(0, 30);
        const double cc = loss_cc(rows_tensor(probs), 1).item();
        const double pp = loss_pp(rows_tensor(feats), rows_tensor(targets), 20.0).item();
        const double de = loss_de(rows_tensor(feats), omega, 20.0).item();
        EXPECT_GE(cc, 0.0);
        EXPECT_GE(pp, 0.0);
        EXPECT_GE(de, 0.0);
        std::vector<std::size_t> perm{3, 0, 4, 2, 1};
        auto permute = [&](const std::vector<Vec>& v) {
            std::vector<Vec> out;
            for (auto i : perm) out.push_back(v[i]);
            return out;
        };
        EXPECT_NEAR(loss_cc(rows_tensor(permute(probs)), 1).item(), cc, 1e-12);
        EXPECT_NEAR(loss_pp(rows_tensor(permute(feats)), rows_tensor(permute(targets)), 20.0).item(), pp, 1e-12);
        EXPECT_NEAR(loss_de(rows_tensor(permute(feats)), omega, 20.0).item(), de, 1e-12);
    }
}

TEST(PromptLosses, ZeroOnlyWhenEveryConditionHolds) {
    const auto aligned = rows_tensor({{1, 0}, {0, 1}});
    const auto targets = rows_tensor({{2, 0}, {0, 3}});
    const auto certain = rows_tensor({{1, 0}, {1, 0}});
    auto total = [](const Tensor& probs, const Tensor& feats, const Tensor& tg, double omega) {
        return loss_cc(probs, 0).item() + loss_pp(feats, tg, 20.0).item() + loss_de(feats, omega, 20.0).item();
    };
    EXPECT_NEAR(total(certain, aligned, targets, 20.0), 0.0, 1e-12);
    EXPECT_GT(total(rows_tensor({{0.9, 0.1}, {1, 0}}), aligned, targets, 20.0), 0.0);  // p[y] < 1
    EXPECT_GT(total(certain, rows_tensor({{1, 0.1}, {0, 1}}), targets, 20.0), 0.0);   // misaligned
    EXPECT_GT(total(certain, aligned, targets, 40.0), 0.0);                            // pair closer than Omega
}

TEST(PromptObjective, GradientWrtPromptMatchesFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        TinyViT m(tiny_vit(), seed);
        m.register_classes(3);
        Rng rng(seed + 50);
        std::vector<double> w(8 * 3);
        for (auto& x : w) x = rng.normal();
        m.load_parameters({{"head.w", Tensor::from({8, 3}, w)}});
        TinyViT frozen = m.snapshot();
        auto imgs = random_images(rng, 4);
        auto ptrs = pointers(imgs);
        APrompt p = make_prompt(0, 3, 8, seed, 0.5);
        auto targets = rows_tensor({random_vec(rng, 8), random_vec(rng, 8), random_vec(rng, 8), random_vec(rng, 8)});
        PromptTrainConfig cfg;
        cfg.omega = 5.0;
        auto f = [&] { return prompt_objective(frozen, ptrs, targets, p.tokens, 2, cfg, 20.0); };
        EXPECT_LE(finite_diff_ratio(f, {p.tokens}, 1e-3, 1e-8), 1.0) << "seed " << seed;
    }
}

TEST(PromptObjective, UnitWeightedSumOfEnabledTerms) {
    TinyViT m(tiny_vit(), 9);
    m.register_classes(2);
    TinyViT frozen = m.snapshot();
    Rng rng(9);
    auto imgs = random_images(rng, 3);
    auto ptrs = pointers(imgs);
    APrompt p = make_prompt(0, 2, 8, 9, 0.5);
    auto targets = rows_tensor({random_vec(rng, 8), random_vec(rng, 8), random_vec(rng, 8)});
    auto value = [&](bool cc, bool pp, bool de) {
        PromptTrainConfig cfg;
        cfg.omega = 10.0;
        cfg.use_cc = cc;
        cfg.use_pp = pp;
        cfg.use_de = de;
        return prompt_objective(frozen, ptrs, targets, p.tokens, 1, cfg, 20.0).item();
    };
    EXPECT_NEAR(value(true, true, true), value(true, false, false) + value(false, true, false) + value(false, false, true),
                1e-12);
    EXPECT_EQ(value(false, false, false), 0.0);
}

TEST(TrainPrompt, ZeroEpochsKeepsInitialPrompt) {
    TinyViT m(tiny_vit(), 10);
    m.register_classes(2);
    TinyViT frozen = m.snapshot();
    Rng rng(10);
    auto imgs = random_images(rng, 5);
    std::vector<Vec> targets(5, random_vec(rng, 8));
    PromptTrainConfig cfg;
    cfg.epochs = 0;
    auto res = train_prompt(frozen, pointers(imgs), targets, 1, 1, cfg, 20.0, 33);
    APrompt init = make_prompt(1, cfg.J, 8, mix_seed(33, "prompt-init"), cfg.init_std);
    EXPECT_EQ(res.prompt.tokens.to_vector(), init.tokens.to_vector());
    EXPECT_EQ(res.steps, 0u);
    EXPECT_EQ(res.initial_loss, res.final_loss);
}

TEST(TrainPrompt, LeavesOldModelBitIdentical) {
    TinyViT m(tiny_vit(), 11);
    m.register_classes(2);
    TinyViT frozen = m.snapshot();
    std::vector<std::vector<double>> before;
    for (auto& nt : frozen.named_parameters()) before.push_back(nt.tensor.to_vector());
    Rng rng(11);
    auto imgs = random_images(rng, 12);
    std::vector<Vec> targets(12, random_vec(rng, 8));
    PromptTrainConfig cfg;
    cfg.epochs = 4;
    cfg.learning_rate = 0.05;
    auto res = train_prompt(frozen, pointers(imgs), targets, 0, 0, cfg, 20.0, 5);
    std::size_t k = 0;
    for (auto& nt : frozen.named_parameters()) EXPECT_EQ(nt.tensor.to_vector(), before[k++]) << nt.name;
    EXPECT_GT(res.steps, 0u);
    EXPECT_FALSE(res.prompt.tokens.has_grad());
}

TEST(TrainPrompt, RequiresFrozenModel) {
    TinyViT m(tiny_vit(), 12);
    m.register_classes(1);
    Rng rng(12);
    auto imgs = random_images(rng, 2);
    std::vector<Vec> targets(2, random_vec(rng, 8));
    EXPECT_THROW(train_prompt(m, pointers(imgs), targets, 0, 0, PromptTrainConfig{}, 20.0, 1), ContractError);
}

TEST(TrainPrompt, LossFallsOnTwoTaskStreams) {
    const ExperimentConfig base = desk_experiment_config();
    std::size_t decreased = 0, total = 0;
    for (std::uint64_t s = 1; s <= 20; ++s) {
        ExperimentConfig cfg = base;
        cfg.seed = s;
        const RunResult run = run_stream(cfg, generate(desk_stream_spec(1000 + s, 2)));
        bool all_fell = !run.conversions.empty();
        for (const auto& c : run.conversions) all_fell = all_fell && c.final_loss < c.initial_loss;
        decreased += all_fell;
        ++total;
    }
    EXPECT_GE(decreased, 19u) << decreased << "/" << total;
}

TEST(ConversionRate, CountsTargetColumnArgmax) {
    TinyViT m(tiny_vit(), 13);
    m.register_classes(3);
    std::vector<double> b{0, 0, 0};
    b[2] = 50.0;
    m.load_parameters({{"head.b", Tensor::from({1, 3}, b)}});
    TinyViT frozen = m.snapshot();
    Rng rng(13);
    auto imgs = random_images(rng, 6);
    APrompt p = make_prompt(0, 2, 8, 1);
    EXPECT_EQ(conversion_rate(frozen, pointers(imgs), p, 2), 1.0);
    EXPECT_EQ(conversion_rate(frozen, pointers(imgs), p, 0), 0.0);
}
