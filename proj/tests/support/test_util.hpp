#pragma once

#include <random>

#include "gmha/tensor.hpp"
#include "gmha/weights.hpp"

namespace gmha::testing {

inline Tensor randn(const Shape& shape, std::mt19937_64& rng, double stddev = 1.0) {
  return random_tensor(shape, rng, stddev);
}

inline std::size_t draw(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace gmha::testing
