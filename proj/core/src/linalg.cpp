#include "gmha/linalg.hpp"

#include <Eigen/SVD>

#include "gmha/errors.hpp"

namespace gmha {

std::vector<double> singular_values(const Tensor& m) {
  if (m.rank() != 2) throw DimensionError("singular_values: expected a matrix, got " + shape_str(m.shape()));
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> view(
      m.data().data(), static_cast<Eigen::Index>(m.dim(0)), static_cast<Eigen::Index>(m.dim(1)));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(view);
  const auto& sv = svd.singularValues();
  return {sv.data(), sv.data() + sv.size()};
}

std::size_t numerical_rank(const Tensor& m, double rel_tol) {
  const auto sv = singular_values(m);
  if (sv.empty() || sv.front() == 0.0) return 0;
  std::size_t r = 0;
  for (double s : sv) r += s > rel_tol * sv.front() ? 1 : 0;
  return r;
}

}  // namespace gmha
