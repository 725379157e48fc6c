// Seeded, stream-splittable random number generation.
//
// Every stochastic component takes an explicit Rng. Monte-Carlo workers
// derive independent streams from (seed, stream ids...), so results do not
// depend on worker count or scheduling. Gaussian and uniform variates are
// produced from raw 64-bit draws (no std::*_distribution) so that output
// is identical across standard library implementations.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace qrx {

namespace detail {

// splitmix64: mixes seed material into well-distributed 64-bit words.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace detail

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(mix_(seed, 0x716871636b724e67ULL)) {}

    Rng(std::uint64_t seed, std::uint64_t stream) : engine_(mix_(seed, stream)) {}

    Rng(std::uint64_t seed, std::uint64_t stream_a, std::uint64_t stream_b)
        : engine_(mix_(mix_(seed, stream_a), stream_b)) {}

    // Child stream; advancing the child never perturbs the parent.
    Rng derive(std::uint64_t stream) const { return Rng(root_, stream); }
    Rng derive(std::uint64_t stream_a, std::uint64_t stream_b) const {
        return Rng(root_, stream_a, stream_b);
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        // Rejection sampling keeps the draw exactly uniform.
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    bool bit() { return (engine_() >> 63) != 0; }

    // Standard normal via Box-Muller; second variate cached.
    double gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t mix_(std::uint64_t seed, std::uint64_t stream) {
        root_ = seed;
        std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
        std::uint64_t out = detail::splitmix64(s);
        out ^= detail::splitmix64(s);
        return out;
    }

    std::uint64_t root_ = 0;
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

} // namespace qrx
