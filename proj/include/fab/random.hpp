#pragma once

// Counter-based random substreams. Every stream is addressed by
// (seed, key, block); blocks are independent engines, so any partition of
// the work across threads reproduces the sequential draws exactly.

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

#include "fab/linalg.hpp"

namespace fab {

inline constexpr Index kDrawsPerBlock = 256;

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t mix_keys(std::uint64_t a, std::uint64_t b);
std::uint64_t hash_string(std::string_view s);
std::uint64_t hash_doubles(std::span<const double> values);

// Fresh engine for one block of a keyed stream.
std::mt19937_64 block_engine(std::uint64_t seed, std::uint64_t key, std::uint64_t block);

// Uniform direction on the unit sphere in R^u.size().
void fill_unit_vector(std::mt19937_64& eng, Eigen::Ref<Vector> u);

// Fisher-Yates shuffle of idx.
void shuffle_indices(std::mt19937_64& eng, std::span<Index> idx);

}  // namespace fab
