#include "gmha/model.hpp"

#include <cmath>
#include <random>

#include "gmha/attention.hpp"
#include "gmha/errors.hpp"
#include "gmha/ops.hpp"

namespace gmha {

std::string layer_prefix(std::size_t layer0) { return "layers." + std::to_string(layer0) + "."; }

std::vector<ModelParamSpec> model_param_specs(const ArchSpec& arch, const ModelDims& dims) {
  validate(arch, dims);
  if (dims.vocab == 0 || dims.ffn == 0) throw ConfigError("model: vocab and ffn must be positive");
  const std::size_t h = dims.hidden;
  std::vector<ModelParamSpec> out;
  out.push_back({"tok_embed", {dims.vocab, h}, ParamKind::kEmbedding});
  const auto attn = expected_weights(arch, dims);
  for (std::size_t l = 0; l < dims.layers; ++l) {
    const std::string p = layer_prefix(l);
    out.push_back({p + "attn_norm", {h}, ParamKind::kNorm, WeightRole::kQuery, l + 1});
    for (const auto& ws : attn) out.push_back({p + "attn." + ws.name, ws.shape, ParamKind::kAttention, ws.role, l + 1});
    out.push_back({p + "ffn_norm", {h}, ParamKind::kNorm, WeightRole::kQuery, l + 1});
    out.push_back({p + "ffn.w1", {h, dims.ffn}, ParamKind::kFfnIn, WeightRole::kQuery, l + 1});
    out.push_back({p + "ffn.w3", {h, dims.ffn}, ParamKind::kFfnIn, WeightRole::kQuery, l + 1});
    out.push_back({p + "ffn.w2", {dims.ffn, h}, ParamKind::kFfnOut, WeightRole::kQuery, l + 1});
  }
  out.push_back({"final_norm", {h}, ParamKind::kNorm});
  out.push_back({"lm_head", {h, dims.vocab}, ParamKind::kHead});
  return out;
}

std::size_t model_param_count(const ArchSpec& arch, const ModelDims& dims) {
  std::size_t n = 0;
  for (const auto& s : model_param_specs(arch, dims)) n += shape_numel(s.shape);
  return n;
}

ToyLM make_model(const ArchSpec& arch, const ModelDims& dims) {
  ToyLM m{arch, dims, {}};
  for (const auto& s : model_param_specs(arch, dims)) m.params.emplace(s.name, Tensor(s.shape, 0.0));
  return m;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

Tensor truncated_normal(const Shape& shape, double stddev, std::uint64_t seed, std::string_view name) {
  const std::uint64_t key = fnv1a(name);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(shape);
  for (auto& v : t.data()) {
    double z;
    do {
      z = dist(rng);
    } while (std::abs(z) > 2.0 * stddev);
    v = z;
  }
  return t;
}

void init_weights(ToyLM& model, std::uint64_t seed, double init_std) {
  for (const auto& s : model_param_specs(model.arch, model.dims)) {
    Tensor& t = model.params.at(s.name);
    const bool requires_grad = t.requires_grad();
    switch (s.kind) {
      case ParamKind::kNorm:
        t = Tensor(s.shape, 1.0);
        break;
      case ParamKind::kAttention:
        if (s.attn_role == WeightRole::kGate) {
          t = Tensor(s.shape, 0.0);
        } else {
          t = truncated_normal(s.shape, init_std, seed, s.name);
          if (s.attn_role == WeightRole::kOutput) t = ops::scale(t, 1.0 / std::sqrt(2.0 * static_cast<double>(s.layer)));
        }
        break;
      case ParamKind::kFfnOut:
        t = ops::scale(truncated_normal(s.shape, init_std, seed, s.name),
                       1.0 / std::sqrt(2.0 * static_cast<double>(s.layer)));
        break;
      case ParamKind::kEmbedding:
      case ParamKind::kFfnIn:
      case ParamKind::kHead:
        t = truncated_normal(s.shape, init_std, seed, s.name);
        break;
    }
    t.set_requires_grad(requires_grad);
  }
}

bool decays(std::string_view name) {
  auto ends_with = [&](std::string_view suffix) {
    return name.size() >= suffix.size() && name.substr(name.size() - suffix.size()) == suffix;
  };
  return !(ends_with("norm") || ends_with(".alpha") || name == "alpha");
}

AttnWeights layer_attention(const ToyLM& model, std::size_t layer0) {
  const std::string p = layer_prefix(layer0) + "attn.";
  AttnWeights w;
  for (const auto& ws : expected_weights(model.arch, model.dims)) w.emplace(ws.name, model.params.at(p + ws.name));
  return w;
}

Var model_logits(Graph& g, ToyLM& model, std::span<const int> tokens) {
  const auto& dims = model.dims;
  auto param = [&](const std::string& name) -> Var {
    auto it = model.params.find(name);
    if (it == model.params.end()) throw ConfigError("model: missing parameter " + name);
    return g.parameter(it->second);
  };
  const auto attn_specs = expected_weights(model.arch, dims);
  Var x = g.embedding(param("tok_embed"), tokens);
  for (std::size_t l = 0; l < dims.layers; ++l) {
    const std::string p = layer_prefix(l);
    AttnVars w;
    for (const auto& ws : attn_specs) w.emplace(ws.name, param(p + "attn." + ws.name));
    const Var a = attention_graph(g, model.arch, dims, w, g.rmsnorm(x, param(p + "attn_norm"), kNormEps));
    x = g.add(x, a);
    const Var f = g.swiglu_ffn(g.rmsnorm(x, param(p + "ffn_norm"), kNormEps), param(p + "ffn.w1"),
                               param(p + "ffn.w3"), param(p + "ffn.w2"));
    x = g.add(x, f);
  }
  return g.matmul(g.rmsnorm(x, param("final_norm"), kNormEps), param("lm_head"));
}

Tensor forward_logits(const ToyLM& model, std::span<const int> tokens) {
  ToyLM frozen = model;
  for (auto& [name, t] : frozen.params) t.set_requires_grad(false);
  Graph g;
  return g.value(model_logits(g, frozen, tokens));
}

DecodeSession::DecodeSession(const ToyLM& model, std::size_t elem_bytes)
    : model_(model), cache_(model.arch, model.dims, elem_bytes) {
  for (std::size_t l = 0; l < model.dims.layers; ++l) attn_.push_back(layer_attention(model, l));
}

Tensor DecodeSession::feed(int token) {
  const auto& dims = model_.dims;
  const Tensor& embed = model_.params.at("tok_embed");
  if (token < 0 || static_cast<std::size_t>(token) >= dims.vocab) {
    throw IndexError("decode: token " + std::to_string(token) + " outside vocabulary");
  }
  auto src = embed.row(static_cast<std::size_t>(token));
  Tensor x({1, dims.hidden}, std::vector<double>(src.begin(), src.end()));
  for (std::size_t l = 0; l < dims.layers; ++l) {
    const std::string p = layer_prefix(l);
    const Tensor normed = ops::rmsnorm(x, model_.params.at(p + "attn_norm"), kNormEps);
    ops::add_inplace(x, decode_step(model_.arch, attn_[l], dims, cache_.layer(l), normed, position_));
    const Tensor n2 = ops::rmsnorm(x, model_.params.at(p + "ffn_norm"), kNormEps);
    ops::add_inplace(x, ops::swiglu_ffn(n2, model_.params.at(p + "ffn.w1"), model_.params.at(p + "ffn.w3"),
                                        model_.params.at(p + "ffn.w2")));
  }
  ++position_;
  return ops::matmul(ops::rmsnorm(x, model_.params.at("final_norm"), kNormEps), model_.params.at("lm_head"));
}

}  // namespace gmha
