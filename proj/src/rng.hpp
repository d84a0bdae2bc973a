#pragma once

#include <cmath>
#include <cstdint>

namespace dmrf::numerics {

// Counter-based deterministic generator. Every draw is a pure function of
// (key, counter), so streams replay identically across platforms and can be
// split for parallel work without sharing state.
class RngStream {
public:
    RngStream() : RngStream(0) {}
    explicit RngStream(std::uint64_t seed, std::uint64_t counter = 0)
        : key_(seed), counter_(counter) {}

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64() {
        std::uint64_t z = key_ + (++counter_) * 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform on [0,1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform on (0,1); never returns an exact endpoint.
    double next_open() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Bounded integer draw in [0, n). n must be >= 1.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    // Box-Muller without caching so the (key, counter) pair is the full state.
    double next_normal() {
        double u1 = next_open();
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // Independent child stream; the parent is not advanced.
    RngStream split(std::uint64_t tag) const {
        std::uint64_t z = key_ ^ (0x9e3779b97f4a7c15ull + tag * 0xd1342543de82ef95ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return RngStream(z ^ (z >> 31));
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
};

} // namespace dmrf::numerics
