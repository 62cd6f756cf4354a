#pragma once

#include <span>

#include "gmha/tensor.hpp"

// Plain (non-recording) tensor math. The autodiff graph computes its forward
// values with these same functions.
namespace gmha::ops {

Tensor matmul(const Tensor& a, const Tensor& b);
// a · bᵀ without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// aᵀ · b without materializing the transpose.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// Multiplies every row of a [r×c] elementwise by v [c].
Tensor mul_rows(const Tensor& a, const Tensor& v);
void add_inplace(Tensor& acc, const Tensor& b);

// Row-wise softmax. -inf entries act as a mask; a row of all -inf is an error.
Tensor softmax_rows(const Tensor& m);

// x / sqrt(mean(x^2) + eps) * gamma over the trailing dimension.
Tensor rmsnorm(const Tensor& x, const Tensor& gamma, double eps);

double sigmoid(double z);
Tensor silu(const Tensor& x);

// (silu(x·w1) ⊙ (x·w3)) · w2, no biases.
Tensor swiglu_ffn(const Tensor& x, const Tensor& w1, const Tensor& w3, const Tensor& w2);

// Mean next-token negative log-likelihood.
double cross_entropy(const Tensor& logits, std::span<const int> targets);

double sum_squares(const Tensor& x);

// T×T additive mask: 0 on and below the diagonal, -inf above.
Tensor causal_mask(std::size_t t);

}  // namespace gmha::ops
