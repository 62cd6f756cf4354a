#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gmha/arch.hpp"
#include "gmha/graph.hpp"
#include "gmha/kvcache.hpp"
#include "gmha/tensor.hpp"
#include "gmha/weights.hpp"

namespace gmha {

inline constexpr double kNormEps = 1e-6;
inline constexpr double kInitStd = 0.02;

enum class ParamKind {
  kEmbedding,
  kNorm,       // RMSNorm gamma: ones at init, no weight decay
  kAttention,
  kFfnIn,      // w1 / w3
  kFfnOut,     // w2: depth-scaled at init
  kHead,
};

struct ModelParamSpec {
  std::string name;
  Shape shape;
  ParamKind kind;
  WeightRole attn_role = WeightRole::kQuery;  // meaningful for kAttention
  std::size_t layer = 0;                      // 1-indexed for per-layer params, 0 otherwise
};

/// Decoder-only LM: token embedding, L pre-norm blocks of attention and
/// SwiGLU FFN with residuals, final RMSNorm, untied output head. No biases.
struct ToyLM {
  ArchSpec arch;
  ModelDims dims;
  TensorMap params;
};

std::vector<ModelParamSpec> model_param_specs(const ArchSpec& arch, const ModelDims& dims);
std::size_t model_param_count(const ArchSpec& arch, const ModelDims& dims);
std::string layer_prefix(std::size_t layer0);  // "layers.<l>."

// Zero-filled model with every parameter present.
ToyLM make_model(const ArchSpec& arch, const ModelDims& dims);

/// Truncated normal N(0, std²) cut at ±2 std, drawn from a stream keyed by
/// (seed, name) so any tensor's draw can be replayed on its own.
Tensor truncated_normal(const Shape& shape, double stddev, std::uint64_t seed, std::string_view name);

/// Linear weights ~ truncated_normal(0.02); attention output projections and
/// FFN w2 in layer l (1-indexed) divided by sqrt(2l); gammas = 1; gate = 0.
void init_weights(ToyLM& model, std::uint64_t seed, double init_std = kInitStd);

// True for parameters subject to weight decay (not gammas, not the gate).
bool decays(std::string_view param_name);

// Attention weights of layer l (0-indexed), with the layer prefix stripped.
AttnWeights layer_attention(const ToyLM& model, std::size_t layer0);

/// Records the full forward pass; returns T×V logits. With trainable set,
/// parameters are bound as leaves (requires_grad must be set on them).
Var model_logits(Graph& g, ToyLM& model, std::span<const int> tokens);

Tensor forward_logits(const ToyLM& model, std::span<const int> tokens);

/// Token-at-a-time inference over a KV cache.
class DecodeSession {
 public:
  explicit DecodeSession(const ToyLM& model, std::size_t elem_bytes = kDefaultElemBytes);

  // Feeds one token and returns its 1×V logits.
  Tensor feed(int token);

  const KvCacheState& cache() const noexcept { return cache_; }
  std::size_t position() const noexcept { return position_; }

 private:
  const ToyLM& model_;
  std::vector<AttnWeights> attn_;
  KvCacheState cache_;
  std::size_t position_ = 0;
};

}  // namespace gmha
