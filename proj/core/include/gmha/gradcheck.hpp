#pragma once

#include <functional>
#include <string>

#include "gmha/graph.hpp"
#include "gmha/tensor.hpp"

namespace gmha {

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_autodiff = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

// Builds a scalar loss over the given parameters inside the supplied graph.
using ScalarObjective = std::function<Var(Graph&, TensorMap&)>;

/// Compares autodiff gradients against central differences (±step) for every
/// entry of every parameter. Relative error per entry is
/// |autodiff - numeric| / (|numeric| + 1e-8). Parameters are restored on exit.
GradcheckResult finite_diff_gradcheck(const ScalarObjective& f, TensorMap& params, double step = 1e-5);

}  // namespace gmha
