#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gmha/errors.hpp"
#include "gmha/model.hpp"
#include "gmha/ops.hpp"

namespace gmha {
namespace {

ModelDims small_mfa() {
  ModelDims d;
  d.hidden = 16;
  d.layers = 3;
  d.n_heads = 2;
  d.latent = d.head_dim = 8;
  d.vocab = 32;
  d.ffn = 24;
  return d;
}

TEST(Model, ParameterInventory) {
  const ArchSpec s = ArchSpec::mfa_kr(KrVariant::kGated);
  const ModelDims d = small_mfa();
  const ToyLM m = make_model(s, d);
  EXPECT_TRUE(m.params.count("tok_embed"));
  EXPECT_TRUE(m.params.count("lm_head"));
  EXPECT_TRUE(m.params.count("final_norm"));
  EXPECT_TRUE(m.params.count("layers.2.attn.alpha"));
  EXPECT_TRUE(m.params.count("layers.0.ffn.w2"));
  EXPECT_FALSE(m.params.count("layers.0.attn.S_v"));
  std::size_t total = 0;
  for (const auto& [name, t] : m.params) total += t.size();
  EXPECT_EQ(total, model_param_count(s, d));
  EXPECT_EQ(m.params.at("lm_head").shape(), (Shape{16, 32}));
}

TEST(Init, GateZeroAndGammasOne) {
  ToyLM m = make_model(ArchSpec::mfa_kr(KrVariant::kGated), small_mfa());
  init_weights(m, 42);
  for (std::size_t l = 0; l < 3; ++l) {
    for (double a : m.params.at(layer_prefix(l) + "attn.alpha").data()) EXPECT_EQ(a, 0.0);
    for (double g : m.params.at(layer_prefix(l) + "attn_norm").data()) EXPECT_EQ(g, 1.0);
  }
  for (double g : m.params.at("final_norm").data()) EXPECT_EQ(g, 1.0);
}

TEST(Init, DepthScalingReplaysTheDraw) {
  ToyLM m = make_model(ArchSpec::of(ArchKind::kMFA), small_mfa());
  init_weights(m, 42);
  for (const char* name : {"layers.1.attn.O.0", "layers.1.ffn.w2"}) {
    const Tensor draw = truncated_normal(m.params.at(name).shape(), 0.02, 42, name);
    const Tensor& got = m.params.at(name);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_DOUBLE_EQ(got[i], draw[i] / std::sqrt(4.0));
  }
  // Layer 3 (1-indexed) output projections use sqrt(6); input-side weights are unscaled.
  const Tensor o3 = truncated_normal({16, 8}, 0.02, 42, "layers.2.attn.O.1");
  EXPECT_DOUBLE_EQ(m.params.at("layers.2.attn.O.1")[5], o3[5] / std::sqrt(6.0));
  EXPECT_EQ(m.params.at("layers.1.attn.S_q"), truncated_normal({16, 8}, 0.02, 42, "layers.1.attn.S_q"));
  EXPECT_EQ(m.params.at("tok_embed"), truncated_normal({32, 16}, 0.02, 42, "tok_embed"));
}

TEST(Init, TruncatedNormalStatistics) {
  const Tensor t = truncated_normal({512, 512}, 0.02, 7, "probe");
  double sum = 0.0, sq = 0.0, extreme = 0.0;
  for (double v : t.data()) {
    sum += v;
    sq += v * v;
    extreme = std::max(extreme, std::abs(v));
  }
  const double n = static_cast<double>(t.size());
  const double mean = sum / n;
  const double stddev = std::sqrt(sq / n - mean * mean);
  EXPECT_GT(stddev, 0.017);
  EXPECT_LT(stddev, 0.021);
  // Analytic std of N(0, s²) cut at ±2s is about 0.8796 s.
  EXPECT_NEAR(stddev, 0.8796 * 0.02, 2e-4);
  EXPECT_LE(extreme, 0.04);
  EXPECT_NEAR(mean, 0.0, 2e-4);
}

TEST(Init, SeedsAreIndependentPerTensorAndReproducible) {
  EXPECT_EQ(truncated_normal({4, 4}, 0.02, 1, "a"), truncated_normal({4, 4}, 0.02, 1, "a"));
  EXPECT_FALSE(truncated_normal({4, 4}, 0.02, 1, "a") == truncated_normal({4, 4}, 0.02, 1, "b"));
  EXPECT_FALSE(truncated_normal({4, 4}, 0.02, 1, "a") == truncated_normal({4, 4}, 0.02, 2, "a"));
}

TEST(Model, DecayExclusions) {
  EXPECT_FALSE(decays("layers.0.attn_norm"));
  EXPECT_FALSE(decays("final_norm"));
  EXPECT_FALSE(decays("layers.3.attn.alpha"));
  EXPECT_TRUE(decays("layers.0.attn.N"));
  EXPECT_TRUE(decays("tok_embed"));
}

TEST(Model, DecodeSessionMatchesFullForward) {
  for (auto spec : {ArchSpec::of(ArchKind::kMFA, PosEmbed::rope()), ArchSpec::mfa_kr(KrVariant::kGated, PosEmbed::rope()),
                    ArchSpec::of(ArchKind::kGQA, PosEmbed::alibi())}) {
    ModelDims d = small_mfa();
    if (spec.kind == ArchKind::kGQA) {
      d.n_heads = 4;
      d.head_dim = 4;
      d.groups = 2;
    }
    ToyLM m = make_model(spec, d);
    init_weights(m, 3, 0.2);
    const std::vector<int> tokens{1, 5, 9, 2, 31, 0, 7};
    const Tensor full = forward_logits(m, tokens);
    DecodeSession session(m);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      const Tensor step = session.feed(tokens[t]);
      for (std::size_t v = 0; v < d.vocab; ++v) EXPECT_NEAR(step(0, v), full(t, v), 1e-10);
    }
    EXPECT_EQ(session.cache().tokens(), tokens.size());
    EXPECT_EQ(session.cache().measured_bytes(), tokens.size() * cache_bytes_per_token(spec, d));
    EXPECT_THROW(session.feed(32), IndexError);
  }
}

TEST(Model, GatedKeyReuseStartsAsMfaWithSharedProjection) {
  const ModelDims d = small_mfa();
  ToyLM kr = make_model(ArchSpec::mfa_kr(KrVariant::kGated, PosEmbed::rope()), d);
  init_weights(kr, 11);
  ToyLM mfa = make_model(ArchSpec::of(ArchKind::kMFA, PosEmbed::rope()), d);
  for (auto& [name, t] : mfa.params) {
    const auto pos = name.rfind("attn.S_v");
    t = pos != std::string::npos ? kr.params.at(name.substr(0, pos) + "attn.S_k") : kr.params.at(name);
  }
  const std::vector<int> tokens{3, 1, 4, 1, 5, 9, 2, 6};
  EXPECT_LE(max_abs_diff(forward_logits(kr, tokens), forward_logits(mfa, tokens)), 1e-10);
}

TEST(Model, RejectsMissingSizes) {
  ModelDims d = small_mfa();
  d.ffn = 0;
  EXPECT_THROW(make_model(ArchSpec::of(ArchKind::kMFA), d), ConfigError);
}

}  // namespace
}  // namespace gmha
