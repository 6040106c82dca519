#pragma once

#include <cstdint>
#include <random>

namespace hzrd {

using Rng = std::mt19937_64;

// Independent sub-stream seed for (seed, stream, substream); used so that
// folds and grid cells draw the same numbers regardless of scheduling.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0);

}  // namespace hzrd
