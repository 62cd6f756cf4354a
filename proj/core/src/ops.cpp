#include "gmha/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "gmha/errors.hpp"

namespace gmha::ops {

namespace {

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + ": expected a matrix, got shape " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Tensor c({m, n});
  MutMap(c.data().data(), m, n).noalias() = ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (b.dim(1) != a.dim(1)) {
    throw DimensionError("matmul_nt: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  }
  Tensor c({a.dim(0), b.dim(0)});
  MutMap(c.data().data(), a.dim(0), b.dim(0)).noalias() =
      ConstMap(a.data().data(), a.dim(0), a.dim(1)) * ConstMap(b.data().data(), b.dim(0), b.dim(1)).transpose();
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul_tn: inner dimensions disagree, " + shape_str(a.shape()) + "^T x " +
                         shape_str(b.shape()));
  }
  Tensor c({m, n});
  MutMap(c.data().data(), m, n).noalias() =
      ConstMap(a.data().data(), k, m).transpose() * ConstMap(b.data().data(), k, n);
  return c;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor t({c, r});
  const double* pa = a.data().data();
  double* pt = t.data().data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) pt[j * r + i] = pa[i * c + j];
  return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (auto& v : out.data()) v *= s;
  return out;
}

Tensor mul_rows(const Tensor& a, const Tensor& v) {
  if (v.rank() != 1 || v.dim(0) != a.cols()) {
    throw DimensionError("mul_rows: vector " + shape_str(v.shape()) + " does not match columns of " +
                         shape_str(a.shape()));
  }
  Tensor out = a;
  const std::size_t c = a.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= v[i % c];
  return out;
}

void add_inplace(Tensor& acc, const Tensor& b) {
  require_same_shape(acc, b, "add_inplace");
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += b[i];
}

Tensor softmax_rows(const Tensor& m) {
  if (m.rank() > 2) throw DimensionError("softmax_rows: expected rank <= 2, got " + shape_str(m.shape()));
  Tensor out(m.shape());
  const std::size_t r = m.rows(), c = m.cols();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < r; ++i) {
    auto in = m.row(i);
    auto o = out.row(i);
    double mx = kNegInf;
    for (double v : in) mx = std::max(mx, v);
    if (mx == kNegInf) throw NumericError("softmax_rows: row " + std::to_string(i) + " is entirely -inf");
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < c; ++j) o[j] /= total;
  }
  return out;
}

Tensor rmsnorm(const Tensor& x, const Tensor& gamma, double eps) {
  const std::size_t h = x.cols();
  if (gamma.rank() != 1 || gamma.dim(0) != h) {
    throw DimensionError("rmsnorm: gamma " + shape_str(gamma.shape()) + " does not match hidden size of " +
                         shape_str(x.shape()));
  }
  if (!(eps > 0.0)) throw ConfigError("rmsnorm: eps must be positive");
  Tensor out(x.shape());
  const std::size_t r = x.size() / h;
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = x.data().data() + i * h;
    double* o = out.data().data() + i * h;
    double ms = 0.0;
    for (std::size_t j = 0; j < h; ++j) ms += in[j] * in[j];
    ms /= static_cast<double>(h);
    const double inv = 1.0 / std::sqrt(ms + eps);
    for (std::size_t j = 0; j < h; ++j) o[j] = in[j] * inv * gamma[j];
  }
  return out;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Tensor silu(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data()) v = v * sigmoid(v);
  return out;
}

Tensor swiglu_ffn(const Tensor& x, const Tensor& w1, const Tensor& w3, const Tensor& w2) {
  if (w1.shape() != w3.shape()) {
    throw DimensionError("swiglu_ffn: w1 " + shape_str(w1.shape()) + " and w3 " + shape_str(w3.shape()) +
                         " differ");
  }
  if (w2.rank() != 2 || w2.dim(0) != w1.dim(1) || w2.dim(1) != w1.dim(0)) {
    throw DimensionError("swiglu_ffn: w2 " + shape_str(w2.shape()) + " incompatible with w1 " +
                         shape_str(w1.shape()));
  }
  return matmul(hadamard(silu(matmul(x, w1)), matmul(x, w3)), w2);
}

double cross_entropy(const Tensor& logits, std::span<const int> targets) {
  require_matrix(logits, "cross_entropy");
  const std::size_t t = logits.dim(0), v = logits.dim(1);
  if (targets.size() != t) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(t) + " rows");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    const int y = targets[i];
    if (y < 0 || static_cast<std::size_t>(y) >= v) {
      throw IndexError("cross_entropy: target " + std::to_string(y) + " outside [0, " + std::to_string(v) + ")");
    }
    auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double l : row) z += std::exp(l - mx);
    total += std::log(z) + mx - row[static_cast<std::size_t>(y)];
  }
  return total / static_cast<double>(t);
}

double sum_squares(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  return s;
}

Tensor causal_mask(std::size_t t) {
  Tensor m({t, t});
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = i + 1; j < t; ++j) m(i, j) = kNegInf;
  return m;
}

}  // namespace gmha::ops
