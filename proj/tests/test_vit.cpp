#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "analogia/errors.hpp"
#include "analogia/gradcheck.hpp"
#include "analogia/ops.hpp"
#include "analogia/rng.hpp"
#include "analogia/vit.hpp"

using namespace analogia;

namespace {

ViTConfig small_config() {
    ViTConfig c;
    c.image_size = 8;
    c.patch_size = 2;
    c.embed_dim = 16;
    c.depth = 2;
    c.heads = 2;
    return c;
}

Image random_image(Rng& rng, std::size_t size = 8) {
    Image img{size, size, 1, std::vector<double>(size * size)};
    for (auto& p : img.pixels) p = rng.uniform(-1, 1);
    return img;
}

std::map<std::string, std::vector<double>> values(const TinyViT& m) {
    std::map<std::string, std::vector<double>> out;
    for (const auto& p : m.named_parameters()) out[p.name] = p.tensor.to_vector();
    return out;
}

}  // namespace

TEST(PatchEmbed, ShapeIsPatchesPlusClassToken) {
    TinyViT m(small_config(), 1);
    Rng rng(1);
    auto tokens = m.patch_embed(random_image(rng));
    EXPECT_EQ(tokens.shape(), (Shape{17, 16}));
}

TEST(PatchEmbed, ZeroImageLeavesClassAndPositionTerms) {
    TinyViT m(small_config(), 2);
    Image zero{8, 8, 1, std::vector<double>(64, 0.0)};
    auto tokens = m.patch_embed(zero);
    std::map<std::string, Tensor> p;
    for (auto& nt : m.named_parameters()) p[nt.name] = nt.tensor;
    const auto& cls = p["cls"];
    const auto& pos = p["pos"];
    const auto& bias = p["patch.b"];
    for (std::size_t j = 0; j < 16; ++j) {
        EXPECT_EQ(tokens.at(0, j), cls.at(j) + pos.at(0, j));
        for (std::size_t r = 1; r < 17; ++r) EXPECT_EQ(tokens.at(r, j), bias.at(j) + pos.at(r, j));
    }
    for (double b : bias.data()) EXPECT_EQ(b, 0.0);
}

TEST(PatchEmbed, ChangingOnePatchTouchesOneTokenRow) {
    TinyViT m(small_config(), 3);
    Rng rng(3);
    Image a = random_image(rng);
    Image b = a;
    // pixel (3, 5) lies in patch row 1, col 2 -> patch index 1*4+2 = 6
    b.pixels[3 * 8 + 5] += 1.0;
    auto ta = m.patch_tokens(a), tb = m.patch_tokens(b);
    for (std::size_t r = 0; r < 16; ++r) {
        bool differs = false;
        for (std::size_t j = 0; j < 16; ++j) differs |= ta.at(r, j) != tb.at(r, j);
        EXPECT_EQ(differs, r == 6) << "row " << r;
    }
}

TEST(Encode, FeatureWidthIndependentOfPromptLength) {
    TinyViT m(small_config(), 4);
    Rng rng(4);
    Image img = random_image(rng);
    const Image* ptr = &img;
    EXPECT_EQ(m.encode_batch({&ptr, 1}, nullptr).shape(), (Shape{1, 16}));  // J = 0
    for (std::size_t j : {1, 5, 15}) {
        Tensor tokens = Tensor::zeros({j, 16});
        for (auto& v : tokens.mutable_data()) v = rng.normal();
        EXPECT_EQ(m.encode_batch({&ptr, 1}, &tokens).shape(), (Shape{1, 16})) << "J=" << j;
    }
}

TEST(Encode, EmptyPromptEqualsPromptFree) {
    TinyViT m(small_config(), 5);
    Rng rng(5);
    Image img = random_image(rng);
    const Image* ptr = &img;
    // J = 0 is spelled as "no prompt"
    EXPECT_THROW(Tensor::zeros({0, 16}), DimensionError);
    EXPECT_EQ(m.encode_batch({&ptr, 1}, nullptr).to_vector(), m.encode(img, nullptr).to_vector());
    EXPECT_EQ(m.encode(img, nullptr).to_vector(), m.encode(img).to_vector());
}

TEST(Encode, BatchMatchesSingle) {
    TinyViT m(small_config(), 6);
    Rng rng(6);
    std::vector<Image> imgs{random_image(rng), random_image(rng), random_image(rng)};
    std::vector<const Image*> ptrs{&imgs[0], &imgs[1], &imgs[2]};
    auto batch = m.encode_batch(ptrs);
    for (std::size_t i = 0; i < 3; ++i) {
        auto single = m.encode(imgs[i]);
        for (std::size_t j = 0; j < 16; ++j) EXPECT_NEAR(batch.at(i, j), single.at(j), 1e-12);
    }
}

TEST(Encode, PromptPerturbsFeatureForAlmostAllSeeds) {
    int differs = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        TinyViT m(small_config(), seed);
        Rng rng(seed + 1000);
        Image img = random_image(rng);
        APrompt p = make_prompt(0, 5, 16, seed, 0.5);
        if (m.encode(img, &p).to_vector() != m.encode(img).to_vector()) ++differs;
    }
    EXPECT_GE(differs, 99);
}

TEST(Encode, DeterministicForward) {
    TinyViT a(small_config(), 7), b(small_config(), 7);
    Rng rng(7);
    Image img = random_image(rng);
    EXPECT_EQ(a.encode(img).to_vector(), b.encode(img).to_vector());
    EXPECT_EQ(a.encode(img).to_vector(), a.encode(img).to_vector());
}

TEST(Encode, WrongImageShapeRejected) {
    TinyViT m(small_config(), 8);
    Rng rng(8);
    EXPECT_THROW(m.encode(random_image(rng, 6)), DimensionError);
}

TEST(Head, ZeroWeightsGiveUniform) {
    TinyViT m(small_config(), 9);
    m.register_classes(4);
    Rng rng(9);
    auto probs = m.head(m.encode(random_image(rng)));
    for (double p : probs.data()) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(Head, OutputsSumToOne) {
    TinyViT m(small_config(), 10);
    m.register_classes(5);
    Rng rng(10);
    std::vector<double> w(16 * 5), b(5);
    for (auto& x : w) x = rng.normal(0, 3);
    for (auto& x : b) x = rng.normal();
    m.load_parameters({{"head.w", Tensor::from({16, 5}, w)}, {"head.b", Tensor::from({1, 5}, b)}});
    for (int t = 0; t < 20; ++t) {
        auto probs = m.head(m.encode(random_image(rng)));
        double s = 0.0;
        for (double p : probs.data()) s += p;
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(Head, GradientsMatchFiniteDifferences) {
    TinyViT m(small_config(), 11);
    m.register_classes(3);
    Rng rng(11);
    std::vector<double> w(16 * 3);
    for (auto& x : w) x = rng.normal();
    m.load_parameters({{"head.w", Tensor::from({16, 3}, w)}});
    Image img = random_image(rng);
    Tensor feat = m.encode(img).detach().clone(true);
    std::vector<Tensor> params{feat};
    for (auto& nt : m.named_parameters())
        if (nt.name.rfind("head.", 0) == 0) params.push_back(nt.tensor);
    auto f = [&] { return log(pick_per_row(m.head(feat), std::vector<std::size_t>{1})); };
    EXPECT_LE(finite_diff_ratio([&] { return sum(f()); }, params, 1e-3, 1e-8), 1.0);
}

TEST(Head, CapacityEnforced) {
    auto c = small_config();
    c.num_classes_capacity = 3;
    TinyViT m(c, 12);
    m.register_classes(3);
    EXPECT_THROW(m.register_classes(1), ContractError);
}

TEST(Stage, TrainableGroupsFollowStage) {
    TinyViT m(small_config(), 13);
    m.register_classes(2);
    auto trainable = [&] {
        std::set<std::string> s;
        for (auto& nt : m.named_parameters())
            if (nt.tensor.requires_grad()) s.insert(nt.name);
        return s;
    };
    m.set_stage(Stage::kAnalogy);
    EXPECT_TRUE(trainable().empty());
    m.set_stage(Stage::kFinetune);
    for (const auto& n : trainable()) {
        EXPECT_TRUE(n.find(".fc1.") != std::string::npos || n.find(".fc2.") != std::string::npos ||
                    n.rfind("head.", 0) == 0)
            << n;
    }
    EXPECT_EQ(trainable().size(), 2u * 4u + 2u);
    m.set_stage(Stage::kFull);
    EXPECT_EQ(trainable().size(), m.named_parameters().size());
}

TEST(Stage, ParameterCountMatchesArchitecture) {
    auto c = small_config();
    TinyViT m(c, 14);
    m.register_classes(3);
    const std::size_t d = 16, h = d * c.mlp_ratio, L = 16, pd = 4;
    const std::size_t block = 4 * d + (d * 3 * d + 3 * d) + (d * d + d) + (d * h + h) + (h * d + d);
    const std::size_t expected = (pd * d + d) + d + (L + 1) * d + c.depth * block + 2 * d + (d * 3 + 3);
    EXPECT_EQ(m.parameter_count(), expected);
}

TEST(Snapshot, EncodeParityBitExact) {
    TinyViT m(small_config(), 15);
    Rng rng(15);
    Image img = random_image(rng);
    TinyViT s = m.snapshot();
    EXPECT_TRUE(s.frozen());
    EXPECT_EQ(s.encode(img).to_vector(), m.encode(img).to_vector());
    TinyViT ss = s.snapshot();
    EXPECT_EQ(ss.encode(img).to_vector(), s.encode(img).to_vector());
    EXPECT_EQ(values(ss), values(s));
}

TEST(Snapshot, IndependentOfLaterSourceUpdates) {
    TinyViT m(small_config(), 16);
    m.register_classes(2);
    Rng rng(16);
    Image img = random_image(rng);
    TinyViT s = m.snapshot();
    const auto before = s.encode(img).to_vector();
    for (auto& t : m.trainable_parameters())
        for (auto& v : t.mutable_data()) v += 0.1;
    EXPECT_NE(m.encode(img).to_vector(), before);
    EXPECT_EQ(s.encode(img).to_vector(), before);
    for (auto& t : s.named_parameters()) EXPECT_FALSE(t.tensor.requires_grad()) << t.name;
    EXPECT_THROW(s.set_stage(Stage::kFull), ContractError);
}

TEST(Prompt, CountsPromptedForwards) {
    TinyViT m(small_config(), 17);
    Rng rng(17);
    Image img = random_image(rng);
    APrompt p = make_prompt(0, 3, 16, 1);
    const auto before = TinyViT::prompted_forward_count();
    m.encode(img);
    EXPECT_EQ(TinyViT::prompted_forward_count(), before);
    m.encode(img, &p);
    EXPECT_EQ(TinyViT::prompted_forward_count(), before + 1);
}

TEST(Prompt, ZeroLengthRejected) { EXPECT_THROW(make_prompt(0, 0, 16, 1), ContractError); }

TEST(Config, InvalidGeometryRejected) {
    auto c = small_config();
    c.patch_size = 3;
    EXPECT_THROW(TinyViT(c, 1), ConfigError);
    c = small_config();
    c.heads = 3;
    EXPECT_THROW(TinyViT(c, 1), ConfigError);
}
