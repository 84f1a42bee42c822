#pragma once

#include <cstdint>
#include <random>

namespace bspdc {

/// SplitMix64 step; used to derive independent child seeds from a master
/// seed so that work split across threads stays reproducible.
constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t child_seed(std::uint64_t master, std::uint64_t index)
{
    return splitmix64(master ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

using Rng = std::mt19937_64;

inline std::int64_t poisson_sample(double mean, Rng& rng)
{
    if (!(mean > 0.0)) {
        return 0;
    }
    return std::poisson_distribution<std::int64_t>(mean)(rng);
}

}  // namespace bspdc
