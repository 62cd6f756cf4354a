#include <cmath>
#include <string>

#include "gmha/attention.hpp"
#include "gmha/errors.hpp"
#include "gmha/ops.hpp"

namespace gmha {

namespace {

const Tensor& at(const AttnWeights& w, const std::string& name) {
  auto it = w.find(name);
  if (it == w.end()) throw ConfigError("missing weight " + name);
  return it->second;
}

// Value mixer M with S_v = S_k · M for each key-reuse variant.
Tensor kr_value_mixer(const ArchSpec& spec, const ModelDims& dims, const AttnWeights& w) {
  const std::size_t c = dims.latent;
  switch (*spec.kr_variant) {
    case KrVariant::kVanilla: return Tensor::identity(c);
    case KrVariant::kExtraProj: return at(w, "N");
    case KrVariant::kResidual: return ops::add(Tensor::identity(c), at(w, "N"));
    case KrVariant::kGated: {
      // I + N diag(alpha)
      Tensor m = ops::mul_rows(at(w, "N"), at(w, "alpha"));
      for (std::size_t i = 0; i < c; ++i) m(i, i) += 1.0;
      return m;
    }
  }
  return Tensor::identity(c);
}

}  // namespace

std::vector<FoldedHead> fold_heads(const ArchSpec& spec, const ModelDims& dims, const AttnWeights& w) {
  require_valid_weights(spec, dims, w);
  if (spec.pos_embed.kind == PosEmbedKind::kRope) {
    throw UnsupportedError("unsupported-combination: folded attention cannot absorb RoPE rotations");
  }
  std::vector<FoldedHead> heads;
  switch (spec.kind) {
    case ArchKind::kFPBA:
      for (std::size_t c = 0; c < dims.hidden; ++c) heads.push_back({at(w, indexed("W", c)), at(w, indexed("U", c))});
      break;
    case ArchKind::kMHA:
    case ArchKind::kMQA:
    case ArchKind::kGQA:
      for (std::size_t h = 0; h < dims.n_heads; ++h) {
        const std::size_t grp = kv_group_of(spec, dims, h);
        const Tensor& k = spec.kind == ArchKind::kMQA ? at(w, "K") : at(w, indexed("K", grp));
        const Tensor& v = spec.kind == ArchKind::kMQA ? at(w, "V") : at(w, indexed("V", grp));
        heads.push_back({ops::matmul_nt(at(w, indexed("Q", h)), k), ops::matmul_nt(v, at(w, indexed("O", h)))});
      }
      break;
    case ArchKind::kMLA: {
      const Tensor& sq = at(w, "S_q");
      const Tensor& sk = at(w, "S_k");
      const Tensor& sv = at(w, "S_v");
      for (std::size_t h = 0; h < dims.n_heads; ++h) {
        // S_q Q_c K_cᵀ S_kᵀ
        const Tensor left = ops::matmul(sq, at(w, indexed("Q", h)));
        const Tensor right = ops::matmul(sk, at(w, indexed("K", h)));
        Tensor qk = ops::matmul_nt(left, right);
        if (uses_decoupled_rope(spec, dims)) {
          ops::add_inplace(qk, ops::matmul_nt(ops::matmul(sq, at(w, indexed("Q_r", h))), at(w, "W_kr")));
        }
        const Tensor vo = ops::matmul_nt(ops::matmul(sv, at(w, indexed("V", h))), at(w, indexed("O", h)));
        heads.push_back({std::move(qk), vo});
      }
      break;
    }
    case ArchKind::kMFA:
    case ArchKind::kMFAKR: {
      const Tensor& sk = at(w, "S_k");
      const Tensor value_proj =
          spec.kind == ArchKind::kMFA ? at(w, "S_v") : ops::matmul(sk, kr_value_mixer(spec, dims, w));
      for (std::size_t h = 0; h < dims.n_heads; ++h) {
        const Tensor q = spec.factored_q ? ops::matmul(at(w, "S_q"), at(w, indexed("Q", h))) : at(w, indexed("W_q", h));
        heads.push_back({ops::matmul_nt(q, sk), ops::matmul_nt(value_proj, at(w, indexed("O", h)))});
      }
      break;
    }
  }
  return heads;
}

Tensor attn_forward_factored(const ArchSpec& spec, const AttnWeights& w, const ModelDims& dims, const Tensor& x) {
  const auto heads = fold_heads(spec, dims, w);
  if (x.rank() != 2 || x.dim(1) != dims.hidden) {
    throw DimensionError("attn_forward_factored: input " + shape_str(x.shape()) + " does not match hidden size");
  }
  const std::size_t t = x.dim(0);
  const double scale = score_scale(spec, dims);
  const auto bias = head_score_bias(spec, dims, t);
  Tensor out({t, dims.hidden});
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const Tensor scores = ops::add(ops::scale(ops::matmul_nt(ops::matmul(x, heads[h].qk), x), scale), bias[h]);
    const Tensor p = ops::softmax_rows(scores);
    ops::add_inplace(out, ops::matmul(p, ops::matmul(x, heads[h].vo)));
  }
  return out;
}

Tensor fpba_forward(const Tensor& x, std::span<const Tensor> w, std::span<const Tensor> u, std::optional<double> scale,
                    std::span<const std::size_t> channel_group) {
  if (x.rank() != 2) throw DimensionError("fpba_forward: input must be T×H, got " + shape_str(x.shape()));
  const std::size_t t = x.dim(0), h = x.dim(1);
  if (w.size() != u.size()) throw DimensionError("fpba_forward: W and U lists differ in length");
  if (channel_group.empty()) {
    if (w.size() != h) {
      throw DimensionError("fpba_forward: expected " + std::to_string(h) + " channel matrices, got " +
                           std::to_string(w.size()));
    }
  } else if (channel_group.size() != h) {
    throw DimensionError("fpba_forward: channel_group must map all " + std::to_string(h) + " channels");
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    for (const Tensor* m : {&w[i], &u[i]}) {
      if (m->rank() != 2 || m->dim(0) != h || m->dim(1) != h) {
        throw DimensionError("fpba_forward: channel matrices must be " + std::to_string(h) + "x" + std::to_string(h) +
                             ", got " + shape_str(m->shape()));
      }
    }
  }
  const double s = scale.value_or(1.0 / std::sqrt(static_cast<double>(h)));
  const Tensor mask = ops::causal_mask(t);
  Tensor out({t, h});
  for (std::size_t c = 0; c < h; ++c) {
    const std::size_t idx = channel_group.empty() ? c : channel_group[c];
    if (idx >= w.size()) throw IndexError("fpba_forward: channel group index out of range");
    const Tensor scores = ops::add(ops::scale(ops::matmul_nt(ops::matmul(x, w[idx]), x), s), mask);
    const Tensor p = ops::softmax_rows(scores);
    ops::add_inplace(out, ops::matmul(p, ops::matmul(x, u[idx])));
  }
  return out;
}

GroupedFpba grouped_fpba_equivalent(const ArchSpec& spec, const ModelDims& dims, const AttnWeights& w) {
  if (spec.kind != ArchKind::kMHA && spec.kind != ArchKind::kMQA && spec.kind != ArchKind::kGQA) {
    throw UnsupportedError("grouped FPBA construction is defined for mha / mqa / gqa");
  }
  if (spec.pos_embed.kind != PosEmbedKind::kNone) {
    throw UnsupportedError("unsupported-combination: grouped FPBA has no positional embedding");
  }
  require_valid_weights(spec, dims, w);
  const std::size_t per_head = dims.hidden / dims.n_heads;
  GroupedFpba g;
  g.scale = score_scale(spec, dims);
  for (std::size_t h = 0; h < dims.n_heads; ++h) {
    const std::size_t grp = kv_group_of(spec, dims, h);
    const Tensor& k = spec.kind == ArchKind::kMQA ? at(w, "K") : at(w, indexed("K", grp));
    const Tensor& v = spec.kind == ArchKind::kMQA ? at(w, "V") : at(w, indexed("V", grp));
    const Tensor& q = at(w, indexed("Q", h));
    const Tensor& o = at(w, indexed("O", h));
    // Brute-force products, independent of fold_heads.
    Tensor wh({dims.hidden, dims.hidden});
    Tensor uh({dims.hidden, dims.hidden});
    for (std::size_t a = 0; a < dims.hidden; ++a) {
      for (std::size_t b = 0; b < dims.hidden; ++b) {
        double sw = 0.0, su = 0.0;
        for (std::size_t e = 0; e < dims.head_dim; ++e) {
          sw += q(a, e) * k(b, e);
          su += v(a, e) * o(b, e);
        }
        wh(a, b) = sw;
        uh(a, b) = su / static_cast<double>(per_head);
      }
    }
    g.w.push_back(std::move(wh));
    g.u.push_back(std::move(uh));
  }
  g.channel_group.resize(dims.hidden);
  for (std::size_t c = 0; c < dims.hidden; ++c) g.channel_group[c] = c / per_head;
  return g;
}

}  // namespace gmha
