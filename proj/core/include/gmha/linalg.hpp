#pragma once

#include <vector>

#include "gmha/tensor.hpp"

namespace gmha {

// Singular values in non-increasing order.
std::vector<double> singular_values(const Tensor& m);

/// Count of singular values above rel_tol * sigma_max.
std::size_t numerical_rank(const Tensor& m, double rel_tol = 1e-10);

}  // namespace gmha
