#pragma once

#include <cstdint>
#include <random>

namespace bimi {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream, index). Lets group members and
/// samples draw from their own streams so results do not depend on the
/// order in which they are processed.
inline Rng substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace bimi
