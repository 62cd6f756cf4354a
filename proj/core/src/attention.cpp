#include "gmha/attention.hpp"

#include <string>

#include "gmha/errors.hpp"
#include "gmha/ops.hpp"
#include "gmha/positional.hpp"

namespace gmha {

AttnVars bind_parameters(Graph& g, AttnWeights& w) {
  AttnVars vars;
  for (auto& [name, t] : w) vars.emplace(name, g.parameter(t));
  return vars;
}

AttnVars bind_constants(Graph& g, const AttnWeights& w) {
  AttnVars vars;
  for (const auto& [name, t] : w) vars.emplace(name, g.constant(t));
  return vars;
}

std::vector<Tensor> head_score_bias(const ArchSpec& spec, const ModelDims& dims, std::size_t t) {
  const std::size_t heads = head_count(spec, dims);
  if (spec.pos_embed.kind != PosEmbedKind::kAlibi) return std::vector<Tensor>(heads, ops::causal_mask(t));
  const Tensor all = alibi_bias(heads, t);
  std::vector<Tensor> out;
  out.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    auto slice = all.data().subspan(h * t * t, t * t);
    out.emplace_back(Shape{t, t}, std::vector<double>(slice.begin(), slice.end()));
  }
  return out;
}

Tensor kr_value_from_key(KrVariant variant, const Tensor& k, const Tensor* n, const Tensor* alpha) {
  if (alpha != nullptr && variant != KrVariant::kGated) {
    throw ConfigError("kr_value_from_key: alpha given for non-gated variant " + std::string(to_string(variant)));
  }
  if (variant == KrVariant::kVanilla) return k;
  if (n == nullptr) throw ConfigError("kr_value_from_key: variant " + std::string(to_string(variant)) + " needs N");
  const std::size_t c = k.cols();
  if (n->rank() != 2 || n->dim(0) != c || n->dim(1) != c) {
    throw DimensionError("kr_value_from_key: N " + shape_str(n->shape()) + " incompatible with keys " +
                         shape_str(k.shape()));
  }
  const Tensor kn = ops::matmul(k, *n);
  switch (variant) {
    case KrVariant::kExtraProj: return kn;
    case KrVariant::kResidual: return ops::add(k, kn);
    case KrVariant::kGated:
      if (alpha == nullptr) throw ConfigError("kr_value_from_key: gated variant needs alpha");
      return ops::add(k, ops::mul_rows(kn, *alpha));
    case KrVariant::kVanilla: break;
  }
  return k;
}

Var kr_value_graph(Graph& g, KrVariant variant, Var k, std::optional<Var> n, std::optional<Var> alpha) {
  if (alpha && variant != KrVariant::kGated) throw ConfigError("kr_value_graph: alpha given for non-gated variant");
  if (variant == KrVariant::kVanilla) return k;
  if (!n) throw ConfigError("kr_value_graph: variant needs N");
  const Var kn = g.matmul(k, *n);
  switch (variant) {
    case KrVariant::kExtraProj: return kn;
    case KrVariant::kResidual: return g.add(k, kn);
    case KrVariant::kGated:
      if (!alpha) throw ConfigError("kr_value_graph: gated variant needs alpha");
      return g.add(k, g.mul_rows(kn, *alpha));
    case KrVariant::kVanilla: break;
  }
  return k;
}

namespace {

Var get(const AttnVars& w, const std::string& name) {
  auto it = w.find(name);
  if (it == w.end()) throw ConfigError("attention: missing weight " + name);
  return it->second;
}

std::optional<Var> find(const AttnVars& w, const std::string& name) {
  auto it = w.find(name);
  if (it == w.end()) return std::nullopt;
  return it->second;
}

}  // namespace

Var attention_graph(Graph& g, const ArchSpec& spec, const ModelDims& dims, const AttnVars& w, Var x) {
  validate(spec, dims);
  const Tensor& xv = g.value(x);
  if (xv.rank() != 2 || xv.dim(1) != dims.hidden) {
    throw DimensionError("attention: input " + shape_str(xv.shape()) + " does not have hidden size " +
                         std::to_string(dims.hidden));
  }
  const std::size_t t = xv.dim(0);
  const auto positions = iota_positions(t);
  const bool rope = spec.pos_embed.kind == PosEmbedKind::kRope;
  const double base = spec.pos_embed.rope_base;
  const double scale = score_scale(spec, dims);
  const auto bias = head_score_bias(spec, dims, t);

  auto rotate = [&](Var v) { return rope ? g.rope(v, positions, base) : v; };
  auto attend = [&](std::size_t head, Var scores, Var values) {
    const Var p = g.softmax_rows(g.add_constant(g.scale(scores, scale), bias[head]));
    return g.matmul(p, values);
  };

  std::optional<Var> out;
  auto accumulate = [&](Var contribution) { out = out ? g.add(*out, contribution) : contribution; };

  switch (spec.kind) {
    case ArchKind::kFPBA: {
      const Var q = rotate(x);
      for (std::size_t c = 0; c < dims.hidden; ++c) {
        // x_i W_c x_jᵀ = x_i · (x_j W_cᵀ)
        const Var k = rotate(g.matmul_nt(x, get(w, indexed("W", c))));
        const Var v = g.matmul(x, get(w, indexed("U", c)));
        accumulate(attend(c, g.matmul_nt(q, k), v));
      }
      break;
    }
    case ArchKind::kMHA:
    case ArchKind::kMQA:
    case ArchKind::kGQA: {
      const std::size_t groups = kv_group_count(spec, dims);
      std::vector<Var> keys, values;
      for (std::size_t grp = 0; grp < groups; ++grp) {
        const std::string kn = spec.kind == ArchKind::kMQA ? "K" : indexed("K", grp);
        const std::string vn = spec.kind == ArchKind::kMQA ? "V" : indexed("V", grp);
        keys.push_back(rotate(g.matmul(x, get(w, kn))));
        values.push_back(g.matmul(x, get(w, vn)));
      }
      for (std::size_t h = 0; h < dims.n_heads; ++h) {
        const std::size_t grp = kv_group_of(spec, dims, h);
        const Var q = rotate(g.matmul(x, get(w, indexed("Q", h))));
        const Var o = attend(h, g.matmul_nt(q, keys[grp]), values[grp]);
        accumulate(g.matmul_nt(o, get(w, indexed("O", h))));
      }
      break;
    }
    case ArchKind::kMLA: {
      const Var cq = g.matmul(x, get(w, "S_q"));
      const Var ck = g.matmul(x, get(w, "S_k"));
      const Var cv = g.matmul(x, get(w, "S_v"));
      const bool decoupled = uses_decoupled_rope(spec, dims);
      std::optional<Var> kr;
      if (decoupled) kr = rotate(g.matmul(x, get(w, "W_kr")));
      for (std::size_t h = 0; h < dims.n_heads; ++h) {
        const Var q = g.matmul(cq, get(w, indexed("Q", h)));
        const Var k = g.matmul(ck, get(w, indexed("K", h)));
        const Var v = g.matmul(cv, get(w, indexed("V", h)));
        Var scores = g.matmul_nt(q, k);
        if (decoupled) {
          const Var qr = rotate(g.matmul(cq, get(w, indexed("Q_r", h))));
          scores = g.add(scores, g.matmul_nt(qr, *kr));
        }
        const Var o = attend(h, scores, v);
        accumulate(g.matmul_nt(o, get(w, indexed("O", h))));
      }
      break;
    }
    case ArchKind::kMFA:
    case ArchKind::kMFAKR: {
      const Var key_raw = g.matmul(x, get(w, "S_k"));
      const Var k = rotate(key_raw);
      Var v = spec.kind == ArchKind::kMFA
                  ? g.matmul(x, get(w, "S_v"))
                  : kr_value_graph(g, *spec.kr_variant, key_raw, find(w, "N"), find(w, "alpha"));
      std::optional<Var> cq;
      if (spec.factored_q) cq = g.matmul(x, get(w, "S_q"));
      for (std::size_t h = 0; h < dims.n_heads; ++h) {
        const Var q = rotate(spec.factored_q ? g.matmul(*cq, get(w, indexed("Q", h)))
                                             : g.matmul(x, get(w, indexed("W_q", h))));
        const Var o = attend(h, g.matmul_nt(q, k), v);
        accumulate(g.matmul_nt(o, get(w, indexed("O", h))));
      }
      break;
    }
  }
  return *out;
}

Tensor attn_forward(const ArchSpec& spec, const AttnWeights& w, const ModelDims& dims, const Tensor& x) {
  require_valid_weights(spec, dims, w);
  Graph g;
  const AttnVars vars = bind_constants(g, w);
  const Var out = attention_graph(g, spec, dims, vars, g.constant(x));
  return g.value(out);
}

}  // namespace gmha
