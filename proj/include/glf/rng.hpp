#pragma once

#include <cmath>
#include <cstdint>

namespace glf {

/// Deterministic 64-bit random stream (SplitMix64).
///
/// The raw u64 stream depends only on the seed and the number of draws, so any
/// two builds on any platform produce the same stream for the same seed. The
/// uniform mapping uses exact dyadic arithmetic and is likewise reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller. Draws exactly two uniforms per call
    /// (no cached second value), so the stream position is call-count only.
    double normal() {
        // first uniform shifted into (0, 1] so log() stays finite
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

    /// Derive an independent child stream; deterministic in (state, tag).
    Rng fork(std::uint64_t tag) const {
        Rng r(state_ ^ (0xD1B54A32D192ED03ull * (tag + 1)));
        r.next_u64();  // decorrelate from the parent state
        return r;
    }

private:
    std::uint64_t state_;
};

}  // namespace glf
