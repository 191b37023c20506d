#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace parmis {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent sub-seeds from (seed, stream) pairs.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix_seed(mix_seed(seed, a), b);
}

struct Bounds {
    std::vector<double> lo;
    std::vector<double> hi;

    static Bounds uniform(std::size_t dim, double lo, double hi) {
        return Bounds{std::vector<double>(dim, lo), std::vector<double>(dim, hi)};
    }
    std::size_t dim() const { return lo.size(); }
};

inline std::vector<double> uniform_point(const Bounds& b, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> x(b.dim());
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = b.lo[i] + u(rng) * (b.hi[i] - b.lo[i]);
    }
    return x;
}

inline void clamp_to(const Bounds& b, std::span<double> x) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] < b.lo[i]) x[i] = b.lo[i];
        if (x[i] > b.hi[i]) x[i] = b.hi[i];
    }
}

} // namespace parmis
