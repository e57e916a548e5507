#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "analogia/image.hpp"

namespace analogia {

enum class StreamMode { kCIL, kDIL };

const char* mode_name(StreamMode mode);
StreamMode parse_mode(const std::string& text);

struct SynthSpec {
    StreamMode mode = StreamMode::kCIL;
    std::size_t tasks = 5;
    std::size_t classes_per_task = 2;
    std::size_t train_per_class = 40;
    std::size_t test_per_class = 20;
    std::size_t image_size = 16;
    std::size_t channels = 1;
    // 0 keeps tasks in one shared context; 1 puts each task in its own
    // strongly different context (and, for DIL, rotates the class patterns).
    double gap = 0.5;
    double noise = 0.1;  // scales every per-sample perturbation
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const SynthSpec&) const = default;
};

struct Task {
    std::vector<ClassId> labels;  // ascending
    std::vector<Sample> train;
    std::vector<Sample> test;
    bool operator==(const Task&) const = default;
};

struct TaskStream {
    SynthSpec spec;
    std::vector<Task> tasks;

    StreamMode mode() const { return spec.mode; }
    bool operator==(const TaskStream&) const = default;
};

// CIL: task t owns labels [t*k, (t+1)*k). DIL: every domain uses [0, k).
TaskStream generate(const SynthSpec& spec);

// Noise-free rendering of one class in one task context.
Image render_archetype(const SynthSpec& spec, std::size_t task, std::size_t class_in_task);

// Mean pixel-space L2 distance between archetypes of classes in different tasks.
double mean_intertask_archetype_distance(const SynthSpec& spec);

inline constexpr std::uint32_t kStreamFormatVersion = 1;

void save_stream(const TaskStream& stream, const std::filesystem::path& path);
// Throws ParseError (with byte offset) on malformed input and VersionError
// on an unsupported format version. Never returns a partial stream.
TaskStream load_stream(const std::filesystem::path& path);

std::string encode_stream(const TaskStream& stream);
TaskStream decode_stream(const std::string& bytes);

}  // namespace analogia
