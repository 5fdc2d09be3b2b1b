#pragma once

#include <cmath>
#include <cstdint>

namespace bseg {

// SplitMix64 (Steele, Lea, Flood 2014). Fixed constants so streams are
// bit-identical across platforms; every seeded feature in this project
// (dataset generation, weight init, test fixtures) draws from it.
struct SplitMix64 {
    std::uint64_t state = 0;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform in [0,1), 53-bit resolution
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive range; modulo bias is < 2^-32 for the ranges used here
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1));
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller, cosine branch only (one value per call, two draws consumed)
    double gaussian(double stddev) {
        double u1 = 1.0 - uniform();  // (0,1]
        double u2 = uniform();
        return stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }
};

// Derives an independent substream for (seed, index) pairs.
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
    SplitMix64 s(seed ^ (0xA0761D6478BD642Full * (index + 1)));
    return s.next();
}

}  // namespace bseg
