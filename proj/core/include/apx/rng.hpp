#pragma once

#include <cmath>
#include <cstdint>

namespace apx {

// Counter-based deterministic RNG. Each stream is keyed by a 64-bit seed
// mixed from caller-supplied components, so parallel and serial execution
// orders produce identical draws. Core mixer is splitmix64.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_key(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2));
    return splitmix64(s);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // Warm up so small seeds decorrelate.
        splitmix64(state_);
    }

    template <typename... Keys>
    static Rng keyed(std::uint64_t seed, Keys... keys) {
        std::uint64_t k = seed;
        ((k = mix_key(k, static_cast<std::uint64_t>(keys))), ...);
        return Rng(k);
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0,1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller (cached second draw).
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t state_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace apx
