#pragma once

#include <cmath>
#include <cstdint>

namespace rotatekv {

// Counter-based generator: value(i) is a pure function of (seed, i), so any
// element of a workload can be filled independently and the result is
// identical across platforms and fill orders. The mixing function is
// SplitMix64 applied to seed ^ (counter * odd constant).
class CounterRng {
public:
    explicit CounterRng(uint64_t seed) : seed_(seed) {}

    uint64_t bits(uint64_t counter) const {
        uint64_t z = seed_ ^ (counter * 0x9E3779B97F4A7C15ULL);
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform(uint64_t counter) const {
        return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller on counters (2i, 2i+1).
    double normal(uint64_t counter) const {
        double u1 = uniform(2 * counter);
        double u2 = uniform(2 * counter + 1);
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_;
};

// Sequential convenience wrapper over CounterRng.
class RngStream {
public:
    explicit RngStream(uint64_t seed, uint64_t stream = 0)
        : rng_(seed ^ (stream * 0xD1B54A32D192ED03ULL)) {}

    double uniform() { return rng_.uniform(next_++); }
    uint64_t bits() { return rng_.bits(next_++); }

    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

private:
    CounterRng rng_;
    uint64_t next_ = 0;
};

}  // namespace rotatekv
