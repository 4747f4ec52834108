#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace bpb {

// SplitMix64 finalizer. Used both to derive stream keys and as the output
// function of the counter-based generator below.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Counter-based 64-bit generator: the n-th output is mix64(key + n * gamma).
// Streams are addressed by hashing a path of integers (seed, user, session,
// modality, ...) into the key, so streams never depend on how many other
// streams were consumed before them. All distributions are implemented here
// rather than with <random> so the bit stream is identical across standard
// libraries.
class Rng {
public:
    explicit Rng(std::uint64_t key = 0) noexcept : key_(key) {}

    static Rng stream(std::initializer_list<std::uint64_t> path) noexcept {
        std::uint64_t k = 0x5be0cd19137e2179ULL;
        for (auto p : path) k = mix64(k ^ mix64(p));
        return Rng(k);
    }

    // Derive an independent child stream.
    Rng split(std::uint64_t tag) const noexcept { return Rng(mix64(key_ ^ mix64(tag + 0x632be59bd9b4e019ULL))); }

    std::uint64_t next_u64() noexcept {
        ++counter_;
        return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
    }

    // Uniform in [0, 1) with 53 bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Lemire's multiply-shift with rejection.
    std::uint64_t below(std::uint64_t n) noexcept {
        if (n <= 1) return 0;
        for (;;) {
            const unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
            const auto low = static_cast<std::uint64_t>(m);
            if (low >= n || low >= (0 - n) % n) return static_cast<std::uint64_t>(m >> 64);
        }
    }

    // Standard normal via Box-Muller (one value per call, no cached spare).
    double normal() noexcept {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    std::uint64_t key() const noexcept { return key_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace bpb
