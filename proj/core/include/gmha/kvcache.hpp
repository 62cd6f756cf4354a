#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gmha/arch.hpp"
#include "gmha/tensor.hpp"
#include "gmha/weights.hpp"

namespace gmha {

inline constexpr std::size_t kDefaultElemBytes = 2;

struct SlotSpec {
  std::string name;
  std::size_t dim;
};

/// Per-layer cache layout:
///   FPBA {k: H², v: H²}, MHA {k: n·d, v: n·d}, MQA {k: d, v: d},
///   GQA {k: g·d, v: g·d}, MLA {k_latent: C, v_latent: C, k_rope: d_r},
///   MFA {k: C, v: C}, MFA-KR {k: C}.
std::vector<SlotSpec> cache_slots(const ArchSpec& spec, const ModelDims& dims);

/// Closed-form cache footprint per token over all layers:
/// elem_bytes × L × (2H², 2H, 2d, 2gd, 2C + d_r, 2C, C).
std::size_t cache_bytes_per_token(const ArchSpec& spec, const ModelDims& dims,
                                  std::size_t elem_bytes = kDefaultElemBytes);

/// Append-only per-layer cache. Every slot holds the same number of tokens.
class LayerCache {
 public:
  LayerCache() = default;
  explicit LayerCache(std::vector<SlotSpec> slots);

  std::size_t tokens() const noexcept { return tokens_; }
  const std::vector<SlotSpec>& slots() const noexcept { return specs_; }
  bool has_slot(std::string_view name) const;
  std::size_t slot_dim(std::string_view name) const;

  // One row per slot, in slots() order.
  void append(std::span<const std::vector<double>> rows);

  std::span<const double> row(std::string_view slot, std::size_t t) const;
  // Copy of all cached rows of a slot as a tokens() × dim matrix.
  Tensor matrix(std::string_view slot) const;

  // Total stored scalars across slots.
  std::size_t element_count() const;

 private:
  std::size_t index_of(std::string_view name) const;

  std::vector<SlotSpec> specs_;
  std::vector<std::vector<double>> data_;
  std::size_t tokens_ = 0;
};

/// Cache for a whole decoder stack. elem_bytes is accounting metadata only;
/// values are stored at full precision.
class KvCacheState {
 public:
  KvCacheState(const ArchSpec& spec, const ModelDims& dims, std::size_t elem_bytes = kDefaultElemBytes);

  std::size_t layer_count() const noexcept { return layers_.size(); }
  LayerCache& layer(std::size_t l) { return layers_.at(l); }
  const LayerCache& layer(std::size_t l) const { return layers_.at(l); }
  std::size_t elem_bytes() const noexcept { return elem_bytes_; }

  // Token count of layer 0 (all layers advance together in a model).
  std::size_t tokens() const;
  std::size_t element_count() const;
  std::size_t measured_bytes() const { return element_count() * elem_bytes_; }

 private:
  std::vector<LayerCache> layers_;
  std::size_t elem_bytes_;
};

/// Processes one token through one attention layer using and extending its
/// cache. position must equal cache.tokens(). Keys are rotated at write time
/// (MFA-KR stores the unrotated key, which also feeds the value path, and
/// rotates on read). MLA caches latents and recomputes per-head keys/values.
Tensor decode_step(const ArchSpec& spec, const AttnWeights& w, const ModelDims& dims, LayerCache& cache,
                   const Tensor& x_t, std::size_t position);

}  // namespace gmha
