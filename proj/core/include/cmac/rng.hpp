#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace cmac {

/// Deterministic PRNG with a fixed, implementation-independent algorithm.
/// std::shuffle and std:: distributions are unspecified across standard
/// libraries; everything that must reproduce byte-identically (cohort
/// generation, batching, weight init, bootstrap resampling) goes through
/// this generator instead.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    /// splitmix64 step (Steele, Lea & Flood 2014).
    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n).  Modulo bias is negligible at the
    /// sample counts used here and keeps the mapping fixed.
    std::uint64_t next_below(std::uint64_t n) {
        return next_u64() % n;
    }

    /// Standard normal via Box-Muller; the cosine twin is discarded so
    /// every draw consumes exactly two uniforms.
    double gaussian() {
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    /// Fisher-Yates with the fixed index mapping above.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    /// Derive an independent stream, e.g. per bootstrap resample, so
    /// results do not depend on evaluation order or worker count.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        Rng r(seed ^ (0x9e3779b97f4a7c15ULL + stream * 0xd1342543de82ef95ULL));
        return r.next_u64();
    }

private:
    std::uint64_t state_;
};

} // namespace cmac
