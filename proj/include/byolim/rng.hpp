#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace byolim {

using Rng = std::mt19937_64;

std::uint64_t fnv1a64(std::string_view text) noexcept;

/// Independent seed for a named random stream: splitmix64 over the root seed,
/// the stream name and an index (worker, fold, epoch...).
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t index = 0) noexcept;

inline Rng make_rng(std::uint64_t root, std::string_view stream, std::uint64_t index = 0) {
  return Rng(derive_seed(root, stream, index));
}

}  // namespace byolim
