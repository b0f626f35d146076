#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace walshrec {

/// splitmix64 finaliser
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Folds a path of ids (trial, coefficient, sweep point, ...) into one
/// stream id.
constexpr std::uint64_t stream_key(std::initializer_list<std::uint64_t> ids) noexcept
{
    std::uint64_t h = 0x6a09e667f3bcc909ULL;
    for (auto id : ids)
        h = mix64(h ^ mix64(id));
    return h;
}

/// (seed, stream) pair addressing one independent generator. Each task that
/// draws random numbers owns its own stream so results do not depend on
/// scheduling.
struct RngKey {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;

    RngKey child(std::initializer_list<std::uint64_t> ids) const noexcept
    {
        std::uint64_t h = stream;
        for (auto id : ids)
            h = mix64(h ^ mix64(id));
        return {seed, h};
    }
};

inline std::mt19937_64 make_engine(RngKey key)
{
    std::seed_seq seq{static_cast<std::uint32_t>(key.seed), static_cast<std::uint32_t>(key.seed >> 32),
                      static_cast<std::uint32_t>(key.stream), static_cast<std::uint32_t>(key.stream >> 32)};
    return std::mt19937_64(seq);
}

} // namespace walshrec
