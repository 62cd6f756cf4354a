#include "gmha/graph.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "gmha/errors.hpp"
#include "gmha/ops.hpp"
#include "gmha/positional.hpp"

namespace gmha {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kParameter: return "parameter";
    case OpKind::kConstant: return "constant";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kMatMulNT: return "matmul_nt";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kAdd: return "add";
    case OpKind::kAddConstant: return "add_constant";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kMulRows: return "mul_rows";
    case OpKind::kSoftmaxRows: return "softmax_rows";
    case OpKind::kRmsNorm: return "rmsnorm";
    case OpKind::kSilu: return "silu";
    case OpKind::kRope: return "rope";
    case OpKind::kEmbedding: return "embedding";
    case OpKind::kCrossEntropy: return "cross_entropy";
    case OpKind::kSumSquares: return "sum_squares";
    case OpKind::kSum: return "sum";
  }
  return "unknown";
}

namespace {

#ifndef NDEBUG
// -inf is the mask sentinel and may appear in constants and masked scores.
void check_numeric(OpKind kind, const Tensor& t) {
  for (double v : t.data()) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw NumericError("non-finite value produced by " + std::string(op_name(kind)));
    }
    if (std::isinf(v) && kind != OpKind::kAddConstant && kind != OpKind::kConstant) {
      throw NumericError("-inf produced by " + std::string(op_name(kind)));
    }
  }
}
#endif

Tensor from_span(const Shape& shape, std::span<const double> data) {
  return Tensor(shape, std::vector<double>(data.begin(), data.end()));
}

}  // namespace

Var Graph::push(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn fn) {
#ifndef NDEBUG
  check_numeric(kind, value);
#endif
  Node n;
  n.kind = kind;
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  for (auto id : n.inputs) n.needs_grad = n.needs_grad || nodes_[id].needs_grad;
  if (n.needs_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(nodes_.size() - 1);
}

const Graph::Node& Graph::node(Var v) const {
  if (!v.valid() || v.id() >= nodes_.size()) throw std::out_of_range("invalid graph variable");
  return nodes_[v.id()];
}

const Tensor& Graph::value(Var v) const { return node(v).value; }
std::span<const double> Graph::grad(Var v) const { return node(v).grad; }
OpKind Graph::kind(Var v) const { return node(v).kind; }
std::span<const std::size_t> Graph::inputs(Var v) const { return node(v).inputs; }

std::span<double> Graph::accum(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return {};
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Var Graph::parameter(Tensor& p) {
  Node n;
  n.kind = OpKind::kParameter;
  n.value = p;
  n.value.clear_grad();
  n.needs_grad = p.requires_grad();
  n.bound = &p;
  nodes_.push_back(std::move(n));
  return Var(nodes_.size() - 1);
}

Var Graph::constant(Tensor t) {
  t.set_requires_grad(false);
  t.clear_grad();
  return push(OpKind::kConstant, {}, std::move(t), nullptr);
}

Var Graph::matmul(Var a, Var b) {
  const std::size_t ia = a.id(), ib = b.id();
  return push(OpKind::kMatMul, {ia, ib}, ops::matmul(value(a), value(b)), [ia, ib](Graph& gr, std::size_t self) {
    const Tensor gout = from_span(gr.val(self).shape(), gr.g(self));
    if (auto da = gr.accum(ia); !da.empty()) {
      const Tensor t = ops::matmul_nt(gout, gr.val(ib));
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += t[i];
    }
    if (auto db = gr.accum(ib); !db.empty()) {
      const Tensor t = ops::matmul_tn(gr.val(ia), gout);
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += t[i];
    }
  });
}

Var Graph::matmul_nt(Var a, Var b) {
  const std::size_t ia = a.id(), ib = b.id();
  return push(OpKind::kMatMulNT, {ia, ib}, ops::matmul_nt(value(a), value(b)),
              [ia, ib](Graph& gr, std::size_t self) {
                const Tensor gout = from_span(gr.val(self).shape(), gr.g(self));
                if (auto da = gr.accum(ia); !da.empty()) {
                  const Tensor t = ops::matmul(gout, gr.val(ib));
                  for (std::size_t i = 0; i < da.size(); ++i) da[i] += t[i];
                }
                if (auto db = gr.accum(ib); !db.empty()) {
                  const Tensor t = ops::matmul_tn(gout, gr.val(ia));
                  for (std::size_t i = 0; i < db.size(); ++i) db[i] += t[i];
                }
              });
}

Var Graph::transpose(Var a) {
  const std::size_t ia = a.id();
  return push(OpKind::kTranspose, {ia}, ops::transpose(value(a)), [ia](Graph& gr, std::size_t self) {
    auto da = gr.accum(ia);
    const std::size_t r = gr.val(ia).dim(0), c = gr.val(ia).dim(1);
    auto gs = gr.g(self);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) da[i * c + j] += gs[j * r + i];
  });
}

Var Graph::add(Var a, Var b) {
  const std::size_t ia = a.id(), ib = b.id();
  return push(OpKind::kAdd, {ia, ib}, ops::add(value(a), value(b)), [ia, ib](Graph& gr, std::size_t self) {
    auto gs = gr.g(self);
    for (auto id : {ia, ib}) {
      if (auto d = gr.accum(id); !d.empty())
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += gs[i];
    }
  });
}

Var Graph::add_constant(Var a, const Tensor& c) {
  const std::size_t ia = a.id();
  return push(OpKind::kAddConstant, {ia}, ops::add(value(a), c), [ia](Graph& gr, std::size_t self) {
    auto gs = gr.g(self);
    auto d = gr.accum(ia);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += gs[i];
  });
}

Var Graph::mul(Var a, Var b) {
  const std::size_t ia = a.id(), ib = b.id();
  return push(OpKind::kMul, {ia, ib}, ops::hadamard(value(a), value(b)), [ia, ib](Graph& gr, std::size_t self) {
    auto gs = gr.g(self);
    if (auto da = gr.accum(ia); !da.empty()) {
      const auto& bv = gr.val(ib);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += gs[i] * bv[i];
    }
    if (auto db = gr.accum(ib); !db.empty()) {
      const auto& av = gr.val(ia);
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += gs[i] * av[i];
    }
  });
}

Var Graph::scale(Var a, double s) {
  const std::size_t ia = a.id();
  return push(OpKind::kScale, {ia}, ops::scale(value(a), s), [ia, s](Graph& gr, std::size_t self) {
    auto gs = gr.g(self);
    auto d = gr.accum(ia);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * gs[i];
  });
}

Var Graph::mul_rows(Var a, Var v) {
  const std::size_t ia = a.id(), iv = v.id();
  return push(OpKind::kMulRows, {ia, iv}, ops::mul_rows(value(a), value(v)), [ia, iv](Graph& gr, std::size_t self) {
    auto gs = gr.g(self);
    const auto& av = gr.val(ia);
    const auto& vv = gr.val(iv);
    const std::size_t c = vv.size();
    if (auto da = gr.accum(ia); !da.empty())
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += gs[i] * vv[i % c];
    if (auto dv = gr.accum(iv); !dv.empty())
      for (std::size_t i = 0; i < av.size(); ++i) dv[i % c] += gs[i] * av[i];
  });
}

Var Graph::softmax_rows(Var a) {
  const std::size_t ia = a.id();
  return push(OpKind::kSoftmaxRows, {ia}, ops::softmax_rows(value(a)), [ia](Graph& gr, std::size_t self) {
    const auto& p = gr.val(self);
    auto gs = gr.g(self);
    auto d = gr.accum(ia);
    const std::size_t r = p.rows(), c = p.cols();
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += gs[i * c + j] * p[i * c + j];
      for (std::size_t j = 0; j < c; ++j) d[i * c + j] += p[i * c + j] * (gs[i * c + j] - dot);
    }
  });
}

Var Graph::rmsnorm(Var x, Var gamma, double eps) {
  const std::size_t ix = x.id(), ig = gamma.id();
  return push(OpKind::kRmsNorm, {ix, ig}, ops::rmsnorm(value(x), value(gamma), eps),
              [ix, ig, eps](Graph& gr, std::size_t self) {
                const auto& xv = gr.val(ix);
                const auto& gv = gr.val(ig);
                auto gs = gr.g(self);
                const std::size_t h = gv.size();
                const std::size_t rows = xv.size() / h;
                auto dx = gr.accum(ix);
                auto dg = gr.accum(ig);
                for (std::size_t r = 0; r < rows; ++r) {
                  const double* in = xv.data().data() + r * h;
                  const double* go = gs.data() + r * h;
                  double ms = 0.0;
                  for (std::size_t j = 0; j < h; ++j) ms += in[j] * in[j];
                  ms /= static_cast<double>(h);
                  const double inv = 1.0 / std::sqrt(ms + eps);
                  if (!dg.empty())
                    for (std::size_t j = 0; j < h; ++j) dg[j] += go[j] * in[j] * inv;
                  if (!dx.empty()) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < h; ++j) dot += go[j] * gv[j] * in[j];
                    const double k = inv * inv * inv * dot / static_cast<double>(h);
                    for (std::size_t j = 0; j < h; ++j) dx[r * h + j] += inv * gv[j] * go[j] - in[j] * k;
                  }
                }
              });
}

Var Graph::silu(Var x) {
  const std::size_t ix = x.id();
  return push(OpKind::kSilu, {ix}, ops::silu(value(x)), [ix](Graph& gr, std::size_t self) {
    const auto& xv = gr.val(ix);
    auto gs = gr.g(self);
    auto d = gr.accum(ix);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double s = ops::sigmoid(xv[i]);
      d[i] += gs[i] * s * (1.0 + xv[i] * (1.0 - s));
    }
  });
}

Var Graph::rope(Var x, std::span<const std::size_t> positions, double base) {
  const std::size_t ix = x.id();
  std::vector<std::size_t> pos(positions.begin(), positions.end());
  Tensor out = rope_apply(value(x), pos, base);
  return push(OpKind::kRope, {ix}, std::move(out), [ix, pos = std::move(pos), base](Graph& gr, std::size_t self) {
    const Tensor gout = from_span(gr.val(self).shape(), gr.g(self));
    const Tensor back = rope_apply_inverse(gout, pos, base);
    auto d = gr.accum(ix);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += back[i];
  });
}

Var Graph::embedding(Var table, std::span<const int> ids) {
  const std::size_t it = table.id();
  const Tensor& tv = value(table);
  if (tv.rank() != 2) throw DimensionError("embedding: table must be a matrix, got " + shape_str(tv.shape()));
  const std::size_t v = tv.dim(0), h = tv.dim(1);
  if (ids.empty()) throw DimensionError("embedding: empty id sequence");
  std::vector<int> idv(ids.begin(), ids.end());
  Tensor out({idv.size(), h});
  for (std::size_t t = 0; t < idv.size(); ++t) {
    if (idv[t] < 0 || static_cast<std::size_t>(idv[t]) >= v) {
      throw IndexError("embedding: id " + std::to_string(idv[t]) + " outside [0, " + std::to_string(v) + ")");
    }
    auto src = tv.row(static_cast<std::size_t>(idv[t]));
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  return push(OpKind::kEmbedding, {it}, std::move(out), [it, idv = std::move(idv), h](Graph& gr, std::size_t self) {
    auto gs = gr.g(self);
    auto d = gr.accum(it);
    for (std::size_t t = 0; t < idv.size(); ++t) {
      const std::size_t base = static_cast<std::size_t>(idv[t]) * h;
      for (std::size_t j = 0; j < h; ++j) d[base + j] += gs[t * h + j];
    }
  });
}

Var Graph::cross_entropy(Var logits, std::span<const int> targets) {
  const std::size_t il = logits.id();
  std::vector<int> tg(targets.begin(), targets.end());
  const double loss = ops::cross_entropy(value(logits), tg);
  return push(OpKind::kCrossEntropy, {il}, Tensor({1}, loss), [il, tg = std::move(tg)](Graph& gr, std::size_t self) {
    const double upstream = gr.g(self)[0];
    const Tensor p = ops::softmax_rows(gr.val(il));
    const std::size_t t = p.rows(), c = p.cols();
    const double w = upstream / static_cast<double>(t);
    auto d = gr.accum(il);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const double onehot = static_cast<std::size_t>(tg[i]) == j ? 1.0 : 0.0;
        d[i * c + j] += w * (p[i * c + j] - onehot);
      }
    }
  });
}

Var Graph::sum_squares(Var x) {
  const std::size_t ix = x.id();
  return push(OpKind::kSumSquares, {ix}, Tensor({1}, ops::sum_squares(value(x))), [ix](Graph& gr, std::size_t self) {
    const double upstream = gr.g(self)[0];
    const auto& xv = gr.val(ix);
    auto d = gr.accum(ix);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += 2.0 * upstream * xv[i];
  });
}

Var Graph::sum(Var x) {
  const std::size_t ix = x.id();
  double s = 0.0;
  for (double v : value(x).data()) s += v;
  return push(OpKind::kSum, {ix}, Tensor({1}, s), [ix](Graph& gr, std::size_t self) {
    const double upstream = gr.g(self)[0];
    auto d = gr.accum(ix);
    for (auto& v : d) v += upstream;
  });
}

Var Graph::swiglu_ffn(Var x, Var w1, Var w3, Var w2) {
  const Tensor& a = value(w1);
  const Tensor& b = value(w3);
  const Tensor& c = value(w2);
  if (a.shape() != b.shape() || c.rank() != 2 || c.dim(0) != a.dim(1) || c.dim(1) != a.dim(0)) {
    throw DimensionError("swiglu_ffn: incompatible weights " + shape_str(a.shape()) + ", " + shape_str(b.shape()) +
                         ", " + shape_str(c.shape()));
  }
  return matmul(mul(silu(matmul(x, w1)), matmul(x, w3)), w2);
}

void Graph::backward(Var loss) {
  Node& root = nodes_.at(loss.id());
  if (root.value.size() != 1) {
    throw DimensionError("backward: loss must be scalar, got " + shape_str(root.value.shape()));
  }
  if (!root.needs_grad) return;
  for (auto& n : nodes_) n.grad.clear();
  root.grad.assign(1, 1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    if (n.bound != nullptr) {
      auto dst = n.bound->ensure_grad();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
    } else if (n.backward) {
      n.backward(*this, id);
    }
  }
}

}  // namespace gmha
