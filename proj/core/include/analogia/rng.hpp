#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace analogia {

// Seeded random stream. All randomness in a run flows from one root seed
// through named substreams ("data", "init", "shuffle", "prompt-init", ...).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static Rng substream(std::uint64_t root, std::string_view name, std::uint64_t index = 0);

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

    template <class T>
    void shuffle(std::vector<T>& v) {
        // Fisher-Yates with our own index draws
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

std::uint64_t mix_seed(std::uint64_t root, std::string_view name, std::uint64_t index = 0);

}  // namespace analogia
