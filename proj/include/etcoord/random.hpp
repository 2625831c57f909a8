#pragma once

#include <cstdint>
#include <random>

namespace etcoord {

using Rng = std::mt19937_64;

/// Uniform draw in [lo, hi) from the top 53 bits of the engine output.
/// Unlike std::uniform_real_distribution the result does not depend on the
/// standard library implementation.
inline double uniform(Rng& rng, double lo, double hi) {
  const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * unit;
}

}  // namespace etcoord
