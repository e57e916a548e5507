#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace analogia {

// H x W x C image, row-major with channels innermost.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<double> pixels;

    double at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }
    bool operator==(const Image&) const = default;
};

using ClassId = std::int32_t;

struct Sample {
    std::uint64_t id = 0;
    ClassId label = 0;
    Image image;
    bool operator==(const Sample&) const = default;
};

}  // namespace analogia
