#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace orfid {

// Deterministic splitmix64 stream. Standard-library distributions are
// implementation-defined, so every draw (uniform, gaussian, shuffle) is spelled
// out here; identical seeds give identical sequences on any platform.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : state_(seed) {}

    // Derive an independent stream from a seed and a list of indices
    // (device id, sample index, stage tag, ...). Order-sensitive mix.
    static RngStream derive(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
        std::uint64_t s = seed;
        for (std::uint64_t id : ids) {
            s = mix(s ^ (id + 0x9e3779b97f4a7c15ULL));
        }
        return RngStream(s);
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller; the sine mate is discarded so a draw
    // is always exactly two uniforms.
    double next_gaussian() {
        double u1 = next_double();
        const double u2 = next_double();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    template <typename T>
    void shuffle(T* data, std::size_t n) {  // Fisher-Yates
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_below(i));
            T tmp = data[i - 1];
            data[i - 1] = data[j];
            data[j] = tmp;
        }
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

}  // namespace orfid
