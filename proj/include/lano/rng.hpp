#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace lano {

// Deterministic, platform-independent random stream. std:: distributions are
// implementation-defined, so uniform/normal are generated by hand from a
// splitmix64-seeded xoshiro-style core. Streams are split by label or index
// so that consumers (init, shuffle, data) stay independent of call order.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(splitmix(seed ^ kPhi)) {}

    std::uint64_t next_u64() {
        // splitmix64: passes BigCrush, one multiply-xor chain per draw.
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random mantissa bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (both draws kept for determinism).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    /// Uniform integer in [0, n) without modulo bias (Lemire reduction).
    std::uint64_t below(std::uint64_t n) {
        __uint128_t m = static_cast<__uint128_t>(next_u64()) * n;
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Child stream identified by a string label.
    Rng split(std::string_view label) const {
        return Rng(splitmix(state_ ^ fnv1a(label)));
    }

    /// Child stream identified by an index.
    Rng split(std::uint64_t index) const {
        return Rng(splitmix(state_ ^ splitmix(index ^ kPhi)));
    }

  private:
    static constexpr std::uint64_t kPhi = 0x9E3779B97F4A7C15ull;

    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    }

    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xCBF29CE484222325ull;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001B3ull;
        }
        return h;
    }

    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace lano
