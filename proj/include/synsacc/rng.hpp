#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "synsacc/common.hpp"

namespace synsacc::rng {

/// Algorithm identifier carried in configs. Streams are reproducible in any
/// language that implements splitmix64 seeding + xoshiro256** and the
/// derivations below.
inline constexpr std::string_view kAlgorithm = "xoshiro256ss";

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

struct SplitMix64 {
    std::uint64_t state = 0;

    std::uint64_t next() {
        std::uint64_t z = (state += kGolden);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
};

/// xoshiro256** by Blackman & Vigna, seeded via splitmix64 as its authors
/// recommend. All distribution draws are derived explicitly from raw 64-bit
/// outputs so sequences do not depend on a standard library implementation.
class Xoshiro256ss {
public:
    Xoshiro256ss() : Xoshiro256ss(0) {}

    explicit Xoshiro256ss(std::uint64_t seed) {
        SplitMix64 sm{seed};
        for (auto& word : state_) word = sm.next();
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform double in (0, 1]; safe as a log() argument.
    double uniform01_pos() {
        return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Bounded rejection keeps the result unbiased.
        const std::uint64_t threshold = (~n + 1) % n;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    /// Standard normal via Box-Muller; the sine branch is discarded so one
    /// draw always consumes exactly two raw outputs.
    double normal() {
        const double u1 = uniform01_pos();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Exponential inter-arrival time for a homogeneous Poisson process.
    double exponential(double rate) { return -std::log(uniform01_pos()) / rate; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::array<std::uint64_t, 4> state_{};
};

/// Mixes (seed, salts) into an independent stream seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt_a,
                                 std::uint64_t salt_b = 0) {
    SplitMix64 sm{seed};
    std::uint64_t mixed = sm.next();
    sm.state = mixed ^ (salt_a * 0xD1B54A32D192ED03ull);
    mixed = sm.next();
    sm.state = mixed ^ (salt_b * 0x8CB92BA72F3D8DD7ull);
    return sm.next();
}

/// Independent substream for (seed, salt pair). Used for per-pixel and
/// per-layer streams so parallel schedules cannot change results.
inline Xoshiro256ss substream(std::uint64_t seed, std::uint64_t salt_a,
                              std::uint64_t salt_b = 0) {
    return Xoshiro256ss(derive_seed(seed, salt_a, salt_b));
}

inline void require_algorithm(std::string_view name) {
    if (name != kAlgorithm)
        throw ConfigError("unknown rng algorithm: " + std::string(name) +
                          " (expected " + std::string(kAlgorithm) + ")");
}

}  // namespace synsacc::rng
