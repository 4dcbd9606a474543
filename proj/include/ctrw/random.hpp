#pragma once

#include <cstdint>
#include <random>

namespace ctrw {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used only to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Independent stream for work item `index` under `root_seed`. Streams are
// keyed by work item (trajectory, session, bootstrap replicate), never by
// worker thread, so results do not depend on the worker count.
inline Rng make_stream(std::uint64_t root_seed, std::uint64_t index, std::uint64_t salt = 0) {
    const std::uint64_t s = mix64(mix64(root_seed ^ mix64(salt)) + index);
    std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(salt)};
    return Rng(seq);
}

// Uniform on the open interval (0, 1).
inline double uniform_open(Rng& rng) {
    double u;
    do {
        u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    } while (u == 0.0);
    return u;
}

}  // namespace ctrw
