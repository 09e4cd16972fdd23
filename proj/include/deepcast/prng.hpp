#pragma once

// Deterministic pseudo-random stream. The generator is SplitMix64
// (Steele/Lea/Flood, "Fast splittable pseudorandom number generators"):
// a 64-bit Weyl sequence followed by a finalizing mix. Identical seeds
// produce identical streams on every platform; all randomness in the
// library flows through this class.

#include <cstdint>

namespace deepcast {

class Prng {
public:
    explicit Prng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n). n must be positive.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

private:
    std::uint64_t state_;
};

// k-th output of a SplitMix64 stream started at `seed`; used to derive
// independent sub-streams (initialization, shuffling, synthetic data)
// from one run seed.
inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t stream) {
    Prng p(seed);
    std::uint64_t v = 0;
    for (std::uint64_t i = 0; i <= stream; ++i) v = p.next_u64();
    return v;
}

}  // namespace deepcast
