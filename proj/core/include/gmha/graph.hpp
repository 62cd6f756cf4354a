#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "gmha/tensor.hpp"

namespace gmha {

enum class OpKind {
  kParameter,
  kConstant,
  kMatMul,
  kMatMulNT,
  kTranspose,
  kAdd,
  kAddConstant,
  kMul,
  kScale,
  kMulRows,
  kSoftmaxRows,
  kRmsNorm,
  kSilu,
  kRope,
  kEmbedding,
  kCrossEntropy,
  kSumSquares,
  kSum,
};

std::string_view op_name(OpKind kind);

class Graph;

/// Handle to a node in a Graph. Only meaningful for the graph that made it.
class Var {
 public:
  Var() = default;
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return id_ != kInvalid; }

 private:
  friend class Graph;
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  explicit Var(std::size_t id) : id_(id) {}
  std::size_t id_ = kInvalid;
};

/// Tape-based reverse-mode autodiff. Nodes are recorded in insertion order
/// and backward walks them in exact reverse order, so gradients are
/// bit-reproducible. A graph is built per forward call and discarded.
///
/// Parameter leaves are bound to caller-owned tensors; backward() adds into
/// their grad buffers when requires_grad is set. Bound tensors must outlive
/// the graph.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Var parameter(Tensor& p);
  Var constant(Tensor t);

  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var add_constant(Var a, const Tensor& c);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var mul_rows(Var a, Var v);
  Var softmax_rows(Var a);
  Var rmsnorm(Var x, Var gamma, double eps);
  Var silu(Var x);
  Var rope(Var x, std::span<const std::size_t> positions, double base);
  Var embedding(Var table, std::span<const int> ids);
  Var cross_entropy(Var logits, std::span<const int> targets);
  Var sum_squares(Var x);
  Var sum(Var x);

  Var swiglu_ffn(Var x, Var w1, Var w3, Var w2);

  const Tensor& value(Var v) const;
  // Gradient accumulated at v by the last backward(); empty if none reached it.
  std::span<const double> grad(Var v) const;
  OpKind kind(Var v) const;
  std::span<const std::size_t> inputs(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1; loss must hold a single element.
  void backward(Var loss);

 private:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    std::vector<double> grad;
    bool needs_grad = false;
    Tensor* bound = nullptr;
    BackwardFn backward;
  };

  Var push(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn fn);
  const Node& node(Var v) const;
  const Tensor& val(std::size_t id) const { return nodes_[id].value; }
  std::span<const double> g(std::size_t id) const { return nodes_[id].grad; }
  // Gradient buffer of an input, or an empty span if it does not need one.
  std::span<double> accum(std::size_t id);

  std::vector<Node> nodes_;
};

}  // namespace gmha
