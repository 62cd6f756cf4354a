#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gmha/tensor.hpp"

namespace gmha {

inline constexpr double kDefaultRopeBase = 500000.0;

/// Rotary embedding over adjacent pairs: (x[2i], x[2i+1]) of row t is rotated
/// by positions[t] * base^(-2i/D). D must be even.
Tensor rope_apply(const Tensor& x, std::span<const std::size_t> positions, double base);

// Rotation by the negated angles; the adjoint (and inverse) of rope_apply.
Tensor rope_apply_inverse(const Tensor& x, std::span<const std::size_t> positions, double base);

// Rotates a single row in place.
void rope_rotate_row(std::span<double> row, std::size_t position, double base);

/// Geometric ALiBi slopes 2^(-8h/n) for h = 1..n.
std::vector<double> alibi_slopes(std::size_t n_heads);

/// [n_heads × T × T] additive score bias: -slope_h * (i - j) for j <= i and
/// -inf above the diagonal.
Tensor alibi_bias(std::size_t n_heads, std::size_t t);

std::vector<std::size_t> iota_positions(std::size_t t);

}  // namespace gmha
