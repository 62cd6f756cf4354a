#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gmha/arch.hpp"
#include "gmha/graph.hpp"
#include "gmha/weights.hpp"

namespace gmha {

using AttnVars = std::map<std::string, Var, std::less<>>;

// Binds weights into a graph as trainable leaves (tensors must outlive g).
AttnVars bind_parameters(Graph& g, AttnWeights& w);
// Binds copies of the weights as constants.
AttnVars bind_constants(Graph& g, const AttnWeights& w);

/// Per-head additive score bias for a length-t sequence: causal -inf mask,
/// plus the ALiBi distance penalty when pos_embed is ALiBi.
std::vector<Tensor> head_score_bias(const ArchSpec& spec, const ModelDims& dims, std::size_t t);

/// Inference-formulation attention recorded into g: explicit per-token keys
/// and values, per-head causal softmax, RoPE/ALiBi per spec.pos_embed.
Var attention_graph(Graph& g, const ArchSpec& spec, const ModelDims& dims, const AttnVars& w, Var x);

/// Convenience wrapper around attention_graph with constant weights.
Tensor attn_forward(const ArchSpec& spec, const AttnWeights& w, const ModelDims& dims, const Tensor& x);

/// Folded per-head H×H score and output matrices of the factorization form.
struct FoldedHead {
  Tensor qk;  // x_i · qk · x_jᵀ is the unscaled score
  Tensor vo;  // x_j · vo is the head's output contribution
};

// Rejects RoPE: the folded product is position independent.
std::vector<FoldedHead> fold_heads(const ArchSpec& spec, const ModelDims& dims, const AttnWeights& w);

/// Factorization-formulation attention: evaluates the FPBA-style sum with the
/// pre-multiplied matrices from fold_heads. Independent oracle for attn_forward.
Tensor attn_forward_factored(const ArchSpec& spec, const AttnWeights& w, const ModelDims& dims, const Tensor& x);

/// Fully parameterised bilinear attention, evaluated channel by channel.
/// Without channel_group, w and u hold one H×H matrix per channel. With it,
/// channel c uses w[channel_group[c]] / u[channel_group[c]].
/// Default scale is 1/sqrt(H).
Tensor fpba_forward(const Tensor& x, std::span<const Tensor> w, std::span<const Tensor> u,
                    std::optional<double> scale = std::nullopt, std::span<const std::size_t> channel_group = {});

/// Grouped-FPBA parameters reproducing an MHA / MQA / GQA layer: each head's
/// channels share W = Q_h K_hᵀ and U = V_h O_hᵀ / (channels per head).
struct GroupedFpba {
  std::vector<Tensor> w;
  std::vector<Tensor> u;
  std::vector<std::size_t> channel_group;
  double scale = 1.0;
};
GroupedFpba grouped_fpba_equivalent(const ArchSpec& spec, const ModelDims& dims, const AttnWeights& w);

/// MFA-KR value derivation from cached keys, row by row:
///   vanilla k, extra_proj kN, residual k + kN, gated k + alpha ⊙ (kN).
/// alpha must be given exactly for the gated variant; n for all but vanilla.
Tensor kr_value_from_key(KrVariant variant, const Tensor& k, const Tensor* n, const Tensor* alpha);

// Graph counterpart of kr_value_from_key.
Var kr_value_graph(Graph& g, KrVariant variant, Var k, std::optional<Var> n, std::optional<Var> alpha);

}  // namespace gmha
