#pragma once

#include <cmath>
#include <cstdint>

namespace nbseg {

// PCG32 (XSH-RR variant). Self-contained so that sample streams are identical
// across platforms and standard library versions; identical seed => identical
// stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0x853c49e6748fea9bULL) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        state_ = 0u;
        next_u32();
        state_ += seed;
        next_u32();
        have_gauss_ = false;
    }

    std::uint32_t next_u32() {
        std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    std::uint64_t next_u64() {
        std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // Uniform on [0,1) with 32 random bits.
    double uniform() { return next_u32() * (1.0 / 4294967296.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer on [0, n), n >= 1. Bounded rejection keeps it unbiased.
    std::uint32_t uniform_int(std::uint32_t n) {
        std::uint32_t threshold = (-n) % n;
        for (;;) {
            std::uint32_t r = next_u32();
            if (r >= threshold) return r % n;
        }
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller; caches the second draw.
    double normal() {
        if (have_gauss_) {
            have_gauss_ = false;
            return gauss_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 1e-300);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        gauss_ = r * std::sin(a);
        have_gauss_ = true;
        return r * std::cos(a);
    }

    // Independent stream for (base seed, index) pairs; used so per-sample
    // augmentation does not depend on worker scheduling.
    static Rng derive(std::uint64_t base_seed, std::uint64_t index) {
        // splitmix64 finalizer over the pair
        std::uint64_t z = base_seed + 0x9e3779b97f4a7c15ULL * (index + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        z = z ^ (z >> 31);
        return Rng(z);
    }

private:
    std::uint64_t state_ = 0;
    static constexpr std::uint64_t inc_ = 1442695040888963407ULL;
    double gauss_ = 0.0;
    bool have_gauss_ = false;
};

}  // namespace nbseg
