#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "analogia/errors.hpp"
#include "analogia/synth.hpp"

using namespace analogia;

namespace {

SynthSpec base_spec(std::uint64_t seed = 1) {
    SynthSpec s;
    s.tasks = 3;
    s.classes_per_task = 2;
    s.train_per_class = 6;
    s.test_per_class = 3;
    s.image_size = 8;
    s.seed = seed;
    return s;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("analogia_test_" + name);
}

}  // namespace

TEST(Synth, SameSeedSameStream) {
    EXPECT_EQ(generate(base_spec(4)), generate(base_spec(4)));
    EXPECT_NE(generate(base_spec(4)), generate(base_spec(5)));
}

TEST(Synth, NoiseFreeSamplesOfAClassCoincide) {
    SynthSpec s = base_spec(2);
    s.noise = 0.0;
    const TaskStream stream = generate(s);
    for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
        for (const auto* split : {&stream.tasks[t].train, &stream.tasks[t].test}) {
            for (const auto& a : *split) {
                for (const auto& b : stream.tasks[t].train) {
                    if (a.label == b.label) EXPECT_EQ(a.image.pixels, b.image.pixels);
                }
            }
        }
    }
}

TEST(Synth, LabelLayoutFollowsMode) {
    SynthSpec s = base_spec(3);
    const TaskStream cil = generate(s);
    std::set<ClassId> seen;
    for (std::size_t t = 0; t < cil.tasks.size(); ++t) {
        EXPECT_EQ(cil.tasks[t].labels, (std::vector<ClassId>{ClassId(2 * t), ClassId(2 * t + 1)}));
        for (auto y : cil.tasks[t].labels) EXPECT_TRUE(seen.insert(y).second);
    }
    s.mode = StreamMode::kDIL;
    const TaskStream dil = generate(s);
    for (const auto& task : dil.tasks) EXPECT_EQ(task.labels, (std::vector<ClassId>{0, 1}));
    EXPECT_NE(dil.tasks[0].train.front().image, dil.tasks[1].train.front().image);
}

TEST(Synth, SplitsDisjointById) {
    const TaskStream stream = generate(base_spec(6));
    std::set<std::uint64_t> ids;
    std::size_t n = 0;
    for (const auto& task : stream.tasks) {
        EXPECT_EQ(task.train.size(), 12u);
        EXPECT_EQ(task.test.size(), 6u);
        for (const auto* split : {&task.train, &task.test})
            for (const auto& s : *split) {
                ids.insert(s.id);
                ++n;
            }
    }
    EXPECT_EQ(ids.size(), n);
}

TEST(Synth, GapWidensInterTaskDistance) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SynthSpec lo = base_spec(seed), hi = base_spec(seed);
        lo.gap = 0.1;
        hi.gap = 0.9;
        EXPECT_GT(mean_intertask_archetype_distance(hi), mean_intertask_archetype_distance(lo)) << seed;
    }
}

TEST(Synth, InvalidSpecRejected) {
    SynthSpec s = base_spec();
    s.classes_per_task = 0;
    EXPECT_THROW(generate(s), ContractError);
    s = base_spec();
    s.train_per_class = 0;
    EXPECT_THROW(generate(s), ContractError);
}

TEST(StreamFile, RoundTripIsBitExact) {
    const TaskStream stream = generate(base_spec(7));
    const auto path = temp_file("roundtrip.stream");
    save_stream(stream, path);
    EXPECT_EQ(load_stream(path), stream);
    EXPECT_EQ(encode_stream(decode_stream(encode_stream(stream))), encode_stream(stream));
    std::filesystem::remove(path);
}

TEST(StreamFile, TruncationIsAParseErrorAtEveryLength) {
    const std::string bytes = encode_stream(generate(base_spec(8)));
    for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{12}, std::size_t{40}, bytes.size() / 2,
                            bytes.size() - 1}) {
        try {
            decode_stream(bytes.substr(0, cut));
            ADD_FAILURE() << "decoded a stream truncated at " << cut;
        } catch (const ParseError& e) {
            EXPECT_LE(e.offset(), cut);
        }
    }
}

TEST(StreamFile, TrailingBytesRejected) {
    EXPECT_THROW(decode_stream(encode_stream(generate(base_spec(9))) + "x"), ParseError);
}

TEST(StreamFile, VersionMismatchIsExplicit) {
    std::string bytes = encode_stream(generate(base_spec(10)));
    bytes[8] = 2;  // version field follows the 8-byte magic
    EXPECT_THROW(decode_stream(bytes), VersionError);
}

TEST(StreamFile, BadMagicRejected) {
    std::string bytes = encode_stream(generate(base_spec(11)));
    bytes[0] = 'X';
    try {
        decode_stream(bytes);
        ADD_FAILURE();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 0u);
    }
}
