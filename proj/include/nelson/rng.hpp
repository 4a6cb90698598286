#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "nelson/types.hpp"

namespace nelson {

/// SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Per-path normal stream. Path i of an ensemble seeded with s draws from
/// std::mt19937_64 seeded with splitmix64(splitmix64(s) ^ splitmix64(i + 1)).
/// Normals come in Box-Muller pairs from 53-bit uniforms, so the stream is
/// bit-identical across standard libraries and independent of thread count.
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint64_t stream)
        : engine_(splitmix64(splitmix64(seed) ^ splitmix64(stream + 1))) {}

    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double rad = std::sqrt(-2.0 * std::log(u1));
        spare_ = rad * std::sin(kTwoPi * u2);
        has_spare_ = true;
        return rad * std::cos(kTwoPi * u2);
    }

    Vec3 vec3() {
        const double a = (*this)();
        const double b = (*this)();
        const double c = (*this)();
        return {a, b, c};
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

private:
    std::mt19937_64 engine_;
    double spare_{0.0};
    bool has_spare_{false};
};

}  // namespace nelson
