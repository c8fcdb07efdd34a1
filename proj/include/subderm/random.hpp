#pragma once

#include <cstdint>
#include <random>

namespace subderm {

/// Seeded generator whose derived distributions are spelled out here rather
/// than taken from <random>, so sequences match across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (one value per call, no caching).
    double normal();
    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
    std::uint64_t index(std::uint64_t n);

private:
    std::mt19937_64 engine_;
};

/// Stateless seed mixing (splitmix64) for carving independent streams out of one seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

}  // namespace subderm
