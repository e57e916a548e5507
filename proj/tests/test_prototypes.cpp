#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "analogia/errors.hpp"
#include "analogia/prototypes.hpp"
#include "analogia/rng.hpp"

using namespace analogia;

namespace {

Vec random_vec(Rng& rng, std::size_t d, double mean = 0.0, double sd = 1.0) {
    Vec v(d);
    for (auto& x : v) x = rng.normal(mean, sd);
    return v;
}

// Written out independently of the library's distance().
double ref_distance(const Vec& a, const Vec& b, double scale) {
    const double na = std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
    const double nb = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(a[i] / na - b[i] / nb, 2);
    return scale * std::sqrt(s);
}

ClassId brute_force_snmp(const Vec& f, const std::vector<std::pair<ClassId, std::vector<Vec>>>& classes, double scale) {
    ClassId best = 0;
    double best_score = -1.0;
    for (const auto& [id, protos] : classes) {
        double score = 0.0;
        for (const auto& p : protos) score += std::exp(-ref_distance(f, p, scale));
        if (score > best_score) {
            best_score = score;
            best = id;
        }
    }
    return best;
}

}  // namespace

TEST(Distance, SelfIsZero) {
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        Vec v = random_vec(rng, 7);
        EXPECT_NEAR(distance(v, v), 0.0, 1e-12);
    }
}

TEST(Distance, PositiveRescalingIgnored) {
    Rng rng(2);
    for (int i = 0; i < 20; ++i) {
        Vec a = random_vec(rng, 5), b = random_vec(rng, 5);
        Vec ca = a;
        const double c = rng.uniform(0.01, 100.0);
        for (auto& x : ca) x *= c;
        EXPECT_NEAR(distance(ca, b), distance(a, b), 1e-12);
    }
}

TEST(Distance, OrthogonalPairByHand) {
    EXPECT_NEAR(distance(Vec{2, 0}, Vec{0, 3}, 20.0), 20.0 * std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(distance(Vec{2, 0}, Vec{0, 3}, 20.0), 28.28427, 1e-5);
}

TEST(Distance, SymmetricBoundedAndMatchesReference) {
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        Vec a = random_vec(rng, 6), b = random_vec(rng, 6);
        const double s = rng.uniform(1, 40);
        const double d = distance(a, b, s);
        EXPECT_DOUBLE_EQ(d, distance(b, a, s));
        EXPECT_GE(d, 0.0);
        EXPECT_LE(d, 2 * s + 1e-12);
        EXPECT_NEAR(d, ref_distance(a, b, s), 1e-12);
    }
    Vec a{1, 0};
    Vec neg{-3, 0};
    EXPECT_NEAR(distance(a, neg, 20.0), 40.0, 1e-12);
}

TEST(Distance, ZeroVectorRejected) { EXPECT_THROW(distance(Vec{0, 0}, Vec{1, 0}), ContractError); }

TEST(KMeans, SingleClusterIsMean) {
    Rng rng(4);
    std::vector<Vec> pts;
    for (int i = 0; i < 30; ++i) pts.push_back(random_vec(rng, 4));
    auto c = kmeans(pts, 1, 9);
    ASSERT_EQ(c.size(), 1u);
    for (std::size_t j = 0; j < 4; ++j) {
        double m = 0.0;
        for (auto& p : pts) m += p[j];
        EXPECT_NEAR(c[0][j], m / 30.0, 1e-12);
    }
}

TEST(KMeans, IdenticalPointsCollapse) {
    std::vector<Vec> pts(10, Vec{1.5, -2.0, 0.25});
    for (const auto& c : kmeans(pts, 3, 1)) EXPECT_EQ(c, pts[0]);
}

TEST(KMeans, RecoversTwoSeparatedBlobs) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        std::vector<Vec> pts;
        Vec mean_a(3, 0.0), mean_b(3, 0.0);
        for (int i = 0; i < 25; ++i) {
            pts.push_back(random_vec(rng, 3, 5.0, 0.01));
            for (int j = 0; j < 3; ++j) mean_a[j] += pts.back()[j] / 25.0;
            pts.push_back(random_vec(rng, 3, -5.0, 0.01));
            for (int j = 0; j < 3; ++j) mean_b[j] += pts.back()[j] / 25.0;
        }
        auto c = kmeans(pts, 2, seed);
        if (c[0][0] < 0) std::swap(c[0], c[1]);
        for (int j = 0; j < 3; ++j) {
            EXPECT_NEAR(c[0][j], mean_a[j], 1e-3);
            EXPECT_NEAR(c[1][j], mean_b[j], 1e-3);
        }
    }
}

TEST(KMeans, FewerPointsThanClustersPadsWithMean) {
    std::vector<Vec> pts{{1, 0}, {3, 4}};
    auto c = kmeans(pts, 4, 0);
    ASSERT_EQ(c.size(), 4u);
    EXPECT_EQ(c[0], pts[0]);
    EXPECT_EQ(c[1], pts[1]);
    EXPECT_EQ(c[2], (Vec{2, 2}));
    EXPECT_EQ(c[3], (Vec{2, 2}));
}

TEST(KMeans, DeterministicPerSeed) {
    Rng rng(5);
    std::vector<Vec> pts;
    for (int i = 0; i < 40; ++i) pts.push_back(random_vec(rng, 5));
    EXPECT_EQ(kmeans(pts, 3, 77), kmeans(pts, 3, 77));
}

TEST(Snmp, ExactPrototypeWins) {
    PrototypeStore s(1, 2, 20.0);
    s.register_class(4, {{1, 0}});
    s.register_class(9, {{0, 1}});
    EXPECT_EQ(snmp_classify(Vec{1, 0}, s), 4);
    EXPECT_EQ(snmp_classify(Vec{0, 2}, s), 9);
}

TEST(Snmp, TieGoesToSmallestId) {
    PrototypeStore s(2, 2, 20.0);
    s.register_class(7, {{1, 1}, {1, -1}});
    s.register_class(3, {{1, 1}, {1, -1}});
    s.register_class(5, {{-1, 0}, {0, -1}});
    EXPECT_EQ(snmp_classify(Vec{1, 0}, s), 3);
}

TEST(Snmp, MatchesDirectSumOracle) {
    for (std::size_t m : {2u, 3u}) {
        Rng rng(6 + m);
        PrototypeStore s(m, 6, 20.0);
        std::vector<std::pair<ClassId, std::vector<Vec>>> table;
        for (ClassId id : {2, 5, 11}) {
            std::vector<Vec> ps;
            for (std::size_t k = 0; k < m; ++k) ps.push_back(random_vec(rng, 6));
            s.register_class(id, ps);
            table.emplace_back(id, ps);
        }
        for (int q = 0; q < 200; ++q) {
            Vec f = random_vec(rng, 6);
            EXPECT_EQ(snmp_classify(f, s), brute_force_snmp(f, table, 20.0));
        }
    }
}

TEST(Snmp, SinglePrototypeIsNearestPrototype) {
    Rng rng(8);
    PrototypeStore s(1, 4, 20.0);
    std::vector<std::pair<ClassId, Vec>> protos;
    for (ClassId id = 0; id < 6; ++id) {
        protos.emplace_back(id, random_vec(rng, 4));
        s.register_class(id, {protos.back().second});
    }
    for (int q = 0; q < 300; ++q) {
        Vec f = random_vec(rng, 4);
        auto it = std::min_element(protos.begin(), protos.end(), [&](auto& a, auto& b) {
            return ref_distance(f, a.second, 20.0) < ref_distance(f, b.second, 20.0);
        });
        EXPECT_EQ(snmp_classify(f, s), it->first);
    }
}

TEST(Snmp, QueryRescalingInvariant) {
    Rng rng(9);
    PrototypeStore s(2, 5, 20.0);
    for (ClassId id = 0; id < 4; ++id) s.register_class(id, {random_vec(rng, 5), random_vec(rng, 5)});
    for (int q = 0; q < 100; ++q) {
        Vec f = random_vec(rng, 5);
        Vec g = f;
        const double c = rng.uniform(0.1, 10);
        for (auto& x : g) x *= c;
        EXPECT_EQ(snmp_classify(f, s), snmp_classify(g, s));
    }
}

TEST(Snmp, EmptyStoreRejected) {
    PrototypeStore s(1, 2);
    EXPECT_THROW(snmp_classify(Vec{1, 0}, s), ContractError);
}

TEST(Store, RegistrationContract) {
    PrototypeStore s(2, 3);
    s.register_class(1, {{1, 2, 3}, {4, 5, 6}});
    EXPECT_THROW(s.register_class(1, {{1, 2, 3}, {4, 5, 6}}), ContractError);
    EXPECT_THROW(s.register_class(2, {{1, 2, 3}}), ContractError);
    EXPECT_THROW(s.register_class(2, {{1, 2}, {4, 5}}), DimensionError);
    EXPECT_THROW(s.prototypes(3), ContractError);
    s.register_class(0, {{1, 0, 0}, {0, 1, 0}});
    EXPECT_EQ(s.class_ids(), (std::vector<ClassId>{0, 1}));
    EXPECT_EQ(s.persistent_floats(), 2u * 2u * 3u);
}

TEST(ShiftEstimate, SinglePairIsItsShift) {
    std::vector<FeaturePair> pairs{{{1, 2, 3}, {1.5, 1, 3.25}}};
    auto e = estimate_shift(pairs, Vec{0, 1, 0}, 20.0);
    EXPECT_EQ(e.shift, (Vec{0.5, -1, 0.25}));
    EXPECT_EQ(e.reference_count, 1u);
    EXPECT_NEAR(e.mean_reference_distance, ref_distance({1, 2, 3}, {0, 1, 0}, 20.0), 1e-12);
}

TEST(ShiftEstimate, EquidistantPairsAverage) {
    // both "before" features at 90 degrees from the prototype
    std::vector<FeaturePair> pairs{{{1, 0, 0}, {2, 1, 0}}, {{0, 1, 0}, {0, 4, -3}}};
    auto e = estimate_shift(pairs, Vec{0, 0, 1}, 20.0);
    EXPECT_NEAR(e.shift[0], 0.5, 1e-15);
    EXPECT_NEAR(e.shift[1], 2.0, 1e-15);
    EXPECT_NEAR(e.shift[2], -1.5, 1e-15);
}

TEST(ShiftEstimate, FarPairWeightVanishes) {
    // d1 = 0, d2 = 40 at scale 20 -> weights 1 : exp(-40)
    std::vector<FeaturePair> pairs{{{1, 0}, {1, 2}}, {{-1, 0}, {5, 5}}};
    auto e = estimate_shift(pairs, Vec{3, 0}, 20.0);
    EXPECT_NEAR(e.shift[0], 0.0, 1e-12);
    EXPECT_NEAR(e.shift[1], 2.0, 1e-12);
}

TEST(ShiftEstimate, SdcSharesTheKernel) {
    Rng rng(10);
    std::vector<FeaturePair> pairs;
    for (int i = 0; i < 9; ++i) pairs.push_back({random_vec(rng, 4), random_vec(rng, 4)});
    Vec proto = random_vec(rng, 4);
    EXPECT_EQ(estimate_shift(pairs, proto, 20.0).shift, estimate_shift_sdc(pairs, proto, 20.0).shift);
    std::vector<FeaturePair> one{{{1, 2}, {2, 2}}};
    EXPECT_EQ(estimate_shift_sdc(one, Vec{1, 1}, 20.0).shift, (Vec{1, 0}));
}

TEST(ShiftEstimate, MatchesSoftWeightedMeanAndIsPermutationInvariant) {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 1 + rng.index(12), d = 2 + rng.index(6);
        const double scale = rng.uniform(1, 30);
        std::vector<FeaturePair> pairs;
        for (std::size_t i = 0; i < n; ++i) pairs.push_back({random_vec(rng, d), random_vec(rng, d)});
        Vec proto = random_vec(rng, d);
        Vec want(d, 0.0);
        double z = 0.0;
        for (const auto& p : pairs) {
            const double w = std::exp(-ref_distance(p.before, proto, scale));
            z += w;
            for (std::size_t j = 0; j < d; ++j) want[j] += w * (p.after[j] - p.before[j]);
        }
        auto e = estimate_shift(pairs, proto, scale);
        for (std::size_t j = 0; j < d; ++j) {
            EXPECT_NEAR(e.shift[j], want[j] / z, 1e-9);
            double lo = 1e300, hi = -1e300;
            for (const auto& p : pairs) {
                lo = std::min(lo, p.after[j] - p.before[j]);
                hi = std::max(hi, p.after[j] - p.before[j]);
            }
            EXPECT_GE(e.shift[j], lo - 1e-12);
            EXPECT_LE(e.shift[j], hi + 1e-12);
        }
        std::reverse(pairs.begin(), pairs.end());
        auto r = estimate_shift(pairs, proto, scale);
        for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(r.shift[j], e.shift[j], 1e-12);
    }
}

TEST(ShiftEstimate, NoPairsRejected) {
    EXPECT_THROW(estimate_shift(std::vector<FeaturePair>{}, Vec{1, 0}, 20.0), ContractError);
}

TEST(Counteract, ZeroShiftKeepsPrototype) {
    PrototypeStore s(1, 3);
    s.register_class(0, {{1, 2, 3}});
    ShiftEstimate e{0, 0, {0, 0, 0}, 1, 0.0};
    counteract(s, e);
    EXPECT_EQ(s.prototype(0, 0), (Vec{1, 2, 3}));
}

TEST(Counteract, ShiftThenInverseRestores) {
    PrototypeStore s(1, 3);
    s.register_class(0, {{1.5, -2.25, 3}});
    counteract(s, {0, 0, {0.5, 0.125, -1}, 1, 0.0});
    EXPECT_EQ(s.prototype(0, 0), (Vec{2, -2.125, 2}));
    counteract(s, {0, 0, {-0.5, -0.125, 1}, 1, 0.0});
    EXPECT_EQ(s.prototype(0, 0), (Vec{1.5, -2.25, 3}));
}

TEST(Counteract, GlobalTranslationRecoveredForAnyPairCount) {
    Rng rng(12);
    for (std::size_t n : {1u, 2u, 3u, 7u, 50u}) {
        const std::size_t d = 6;
        Vec c = random_vec(rng, d);
        std::vector<FeaturePair> pairs;
        for (std::size_t i = 0; i < n; ++i) {
            Vec before = random_vec(rng, d, 1.0);
            Vec after = before;
            for (std::size_t j = 0; j < d; ++j) after[j] += c[j];
            pairs.push_back({before, after});
        }
        for (int which = 0; which < 2; ++which) {
            PrototypeStore s(2, d);
            Vec p0 = random_vec(rng, d), p1 = random_vec(rng, d);
            s.register_class(1, {p0, p1});
            for (std::size_t m = 0; m < 2; ++m) {
                const Vec& proto = m ? p1 : p0;
                counteract(s, which ? estimate_shift_sdc(pairs, proto, 20.0, 1, m)
                                    : estimate_shift(pairs, proto, 20.0, 1, m));
                for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(s.prototype(1, m)[j], proto[j] + c[j], 1e-9);
            }
        }
    }
}
