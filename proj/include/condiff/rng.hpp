#pragma once

#include <cmath>
#include <cstdint>

namespace condiff {

// SplitMix64 (Steele, Lea, Flood 2014; Vigna's fixed-increment variant).
// Small state, passes BigCrush, and splits cleanly: hashing (seed, stream)
// into the initial state gives statistically independent streams, which is
// what makes per-path reproducibility independent of the worker count.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += UINT64_C(0x9E3779B97F4A7C15));
        z = (z ^ (z >> 30)) * UINT64_C(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)) * UINT64_C(0x94D049BB133111EB);
        return z ^ (z >> 31);
    }

    // Uniform on the open interval (0, 1); never returns 0 or 1, so logs and
    // inverse CDFs are safe without special cases.
    double uniform() {
        return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
    }

private:
    std::uint64_t state_;
};

// One independent stream per (seed, stream_id) pair. Stream ids are path
// indices; the derivation is pure mixing, so stream k can be constructed
// from any worker without touching the other streams.
class PathRng {
public:
    PathRng(std::uint64_t seed, std::uint64_t stream_id)
        : gen_(derive_state(seed, stream_id)) {}

    static std::uint64_t derive_state(std::uint64_t seed, std::uint64_t stream_id) {
        SplitMix64 mixer(seed ^ (stream_id * UINT64_C(0xBF58476D1CE4E5B9) + UINT64_C(0x94D049BB133111EB)));
        mixer.next();
        return mixer.next();
    }

    double uniform() { return gen_.uniform(); }

    // Standard normal via Box-Muller; the second deviate of each pair is
    // cached so consecutive draws cost one transform per two values.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = gen_.uniform();
        const double u2 = gen_.uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double exponential(double rate) { return -std::log(gen_.uniform()) / rate; }

private:
    SplitMix64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace condiff
