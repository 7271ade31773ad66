#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "qaf/tensor.hpp"

namespace qaf {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a master seed and a path of
/// identifiers, e.g. (seed, bus, split, trajectory index). The same path
/// always yields the same stream, so serial and parallel generation agree.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  return Rng(derive_seed(master, path));
}

/// Glorot/Xavier uniform initialisation for a fan_in x fan_out weight.
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace qaf
