#include "gmha/gradcheck.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "gmha/errors.hpp"

namespace gmha {

namespace {

double evaluate(const ScalarObjective& f, TensorMap& params) {
  Graph g;
  const Var loss = f(g, params);
  const Tensor& v = g.value(loss);
  if (v.size() != 1) throw DimensionError("gradcheck: objective must be scalar, got " + shape_str(v.shape()));
  return v[0];
}

}  // namespace

GradcheckResult finite_diff_gradcheck(const ScalarObjective& f, TensorMap& params, double step) {
  if (!(step > 0.0 && step <= 1e-2)) throw RangeError("gradcheck: step must lie in (0, 1e-2]");

  for (auto& [name, t] : params) {
    t.set_requires_grad(true);
    t.clear_grad();
  }
  {
    Graph g;
    const Var loss = f(g, params);
    g.backward(loss);
  }
  TensorMap analytic;
  for (auto& [name, t] : params) {
    Tensor grad(t.shape(), 0.0);
    if (t.has_grad()) {
      auto src = t.grad();
      std::copy(src.begin(), src.end(), grad.data().begin());
    }
    analytic.emplace(name, std::move(grad));
    t.clear_grad();
    t.set_requires_grad(false);
  }

  GradcheckResult result;
  for (auto& [name, t] : params) {
    const Tensor& ad = analytic.at(name);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t[i];
      t[i] = orig + step;
      const double fp = evaluate(f, params);
      t[i] = orig - step;
      const double fm = evaluate(f, params);
      t[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("gradcheck: non-finite objective when perturbing " + name + "[" + std::to_string(i) + "]");
      }
      const double numeric = (fp - fm) / (2.0 * step);
      const double rel = std::abs(ad[i] - numeric) / (std::abs(numeric) + 1e-8);
      ++result.entries_checked;
      if (result.entries_checked == 1 || rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = name;
        result.worst_index = i;
        result.worst_autodiff = ad[i];
        result.worst_numeric = numeric;
      }
    }
  }
  for (auto& [name, t] : params) t.set_requires_grad(true);
  return result;
}

}  // namespace gmha
