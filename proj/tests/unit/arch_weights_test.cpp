#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "gmha/arch.hpp"
#include "gmha/errors.hpp"
#include "gmha/weights.hpp"

namespace gmha {
namespace {

ModelDims mha_dims() {
  ModelDims d;
  d.hidden = 8;
  d.n_heads = 2;
  d.head_dim = 4;
  d.groups = 2;
  return d;
}

ModelDims mfa_dims() {
  ModelDims d;
  d.hidden = 8;
  d.n_heads = 3;
  d.latent = 4;
  d.head_dim = 4;
  return d;
}

TEST(Arch, StringRoundTrip) {
  for (auto k : {ArchKind::kFPBA, ArchKind::kMHA, ArchKind::kMQA, ArchKind::kGQA, ArchKind::kMLA, ArchKind::kMFA,
                 ArchKind::kMFAKR}) {
    EXPECT_EQ(parse_arch_kind(to_string(k)), k);
  }
  for (auto v : {KrVariant::kVanilla, KrVariant::kExtraProj, KrVariant::kResidual, KrVariant::kGated}) {
    EXPECT_EQ(parse_kr_variant(to_string(v)), v);
  }
  EXPECT_EQ(parse_pos_embed("alibi"), PosEmbedKind::kAlibi);
  EXPECT_THROW(parse_arch_kind("transformer"), ConfigError);
  EXPECT_EQ(to_string(ArchKind::kMFAKR), "mfa-kr");
  EXPECT_EQ(arch_label(ArchSpec::mfa_kr(KrVariant::kResidual)), "mfa-kr(residual)");
}

TEST(Arch, MfaKrDefaultsToGated) {
  const ArchSpec s = ArchSpec::of(ArchKind::kMFAKR);
  ASSERT_TRUE(s.kr_variant.has_value());
  EXPECT_EQ(*s.kr_variant, KrVariant::kGated);
  EXPECT_FALSE(ArchSpec::of(ArchKind::kMFA).kr_variant.has_value());
}

TEST(Arch, ValidateRejectsInconsistentDims) {
  ModelDims d = mha_dims();
  d.hidden = 9;
  EXPECT_THROW(validate(ArchSpec::of(ArchKind::kMHA), d), ConfigError);

  d = mha_dims();
  d.n_heads = 4;
  d.head_dim = 2;
  d.groups = 3;
  EXPECT_THROW(validate(ArchSpec::of(ArchKind::kGQA), d), ConfigError);

  ModelDims mla;
  mla.hidden = 8;
  mla.n_heads = 2;
  mla.head_dim = 2;
  mla.latent = 4;
  EXPECT_NO_THROW(validate(ArchSpec::of(ArchKind::kMLA), mla));
  EXPECT_THROW(validate(ArchSpec::of(ArchKind::kMLA, PosEmbed::rope()), mla), ConfigError);

  d = mfa_dims();
  d.head_dim = 2;
  EXPECT_THROW(validate(ArchSpec::of(ArchKind::kMFA), d), ConfigError);

  d = mfa_dims();
  d.latent = d.head_dim = 3;
  EXPECT_NO_THROW(validate(ArchSpec::of(ArchKind::kMFA), d));
  EXPECT_THROW(validate(ArchSpec::of(ArchKind::kMFA, PosEmbed::rope()), d), ConfigError);
}

TEST(Arch, ValidateRejectsInconsistentSpec) {
  ArchSpec s = ArchSpec::of(ArchKind::kMHA);
  s.factored_q = false;
  EXPECT_THROW(validate(s, mha_dims()), ConfigError);

  s = ArchSpec::of(ArchKind::kMFA);
  s.kr_variant = KrVariant::kGated;
  EXPECT_THROW(validate(s, mfa_dims()), ConfigError);

  s = ArchSpec::of(ArchKind::kMFA);
  s.score_scale = -1.0;
  EXPECT_THROW(validate(s, mfa_dims()), ConfigError);
}

TEST(Arch, ScoreScaleUsesDotWidth) {
  EXPECT_DOUBLE_EQ(score_scale(ArchSpec::of(ArchKind::kMHA), mha_dims()), 0.5);
  EXPECT_DOUBLE_EQ(score_scale(ArchSpec::of(ArchKind::kMFA), mfa_dims()), 0.5);
  ModelDims fp;
  fp.hidden = 16;
  EXPECT_DOUBLE_EQ(score_scale(ArchSpec::of(ArchKind::kFPBA), fp), 0.25);
  ModelDims mla;
  mla.hidden = 8;
  mla.n_heads = 2;
  mla.head_dim = 6;
  mla.latent = 4;
  mla.rope_dim = 3;
  EXPECT_DOUBLE_EQ(score_scale(ArchSpec::of(ArchKind::kMLA), mla), 1.0 / 3.0);
  ArchSpec s = ArchSpec::of(ArchKind::kMHA);
  s.score_scale = 0.125;
  EXPECT_DOUBLE_EQ(score_scale(s, mha_dims()), 0.125);
}

TEST(Arch, GroupAssignment) {
  ModelDims d;
  d.hidden = 8;
  d.n_heads = 8;
  d.head_dim = 1;
  d.groups = 2;
  const ArchSpec gqa = ArchSpec::of(ArchKind::kGQA);
  EXPECT_EQ(kv_group_of(gqa, d, 3), 0u);
  EXPECT_EQ(kv_group_of(gqa, d, 4), 1u);
  EXPECT_EQ(kv_group_count(gqa, d), 2u);
  EXPECT_EQ(kv_group_of(ArchSpec::of(ArchKind::kMQA), d, 7), 0u);
  EXPECT_EQ(kv_group_of(ArchSpec::of(ArchKind::kMHA), d, 7), 7u);
}

std::vector<std::string> names(const std::vector<WeightSpec>& ws) {
  std::vector<std::string> out;
  for (const auto& w : ws) out.push_back(w.name);
  std::sort(out.begin(), out.end());
  return out;
}

TEST(Weights, ExpectedNamesPerArchitecture) {
  EXPECT_EQ(names(expected_weights(ArchSpec::of(ArchKind::kMQA), mha_dims())),
            (std::vector<std::string>{"K", "O.0", "O.1", "Q.0", "Q.1", "V"}));
  EXPECT_EQ(names(expected_weights(ArchSpec::of(ArchKind::kMFA), mfa_dims())),
            (std::vector<std::string>{"O.0", "O.1", "O.2", "Q.0", "Q.1", "Q.2", "S_k", "S_q", "S_v"}));
  EXPECT_EQ(names(expected_weights(ArchSpec::mfa_kr(KrVariant::kVanilla), mfa_dims())),
            (std::vector<std::string>{"O.0", "O.1", "O.2", "Q.0", "Q.1", "Q.2", "S_k", "S_q"}));
  const auto gated = names(expected_weights(ArchSpec::mfa_kr(KrVariant::kGated), mfa_dims()));
  EXPECT_TRUE(std::binary_search(gated.begin(), gated.end(), "alpha"));
  EXPECT_TRUE(std::binary_search(gated.begin(), gated.end(), "N"));

  ArchSpec unf = ArchSpec::of(ArchKind::kMFA);
  unf.factored_q = false;
  const auto u = names(expected_weights(unf, mfa_dims()));
  EXPECT_FALSE(std::binary_search(u.begin(), u.end(), "S_q"));
  EXPECT_TRUE(std::binary_search(u.begin(), u.end(), "W_q.2"));
}

TEST(Weights, ShapesAndRoles) {
  ModelDims d;
  d.hidden = 8;
  d.n_heads = 2;
  d.head_dim = 3;
  d.latent = 5;
  d.rope_dim = 2;
  for (const auto& w : expected_weights(ArchSpec::of(ArchKind::kMLA), d)) {
    if (w.name == "S_q") EXPECT_EQ(w.shape, (Shape{8, 5}));
    if (w.name == "K.1") EXPECT_EQ(w.shape, (Shape{5, 3}));
    if (w.name == "O.0") {
      EXPECT_EQ(w.shape, (Shape{8, 3}));
      EXPECT_EQ(w.role, WeightRole::kOutput);
    }
    if (w.name == "W_kr") EXPECT_EQ(w.shape, (Shape{8, 2}));
    if (w.name == "Q_r.1") EXPECT_EQ(w.shape, (Shape{5, 2}));
  }
  for (const auto& w : expected_weights(ArchSpec::mfa_kr(KrVariant::kGated), mfa_dims())) {
    if (w.name == "alpha") {
      EXPECT_EQ(w.shape, (Shape{4}));
      EXPECT_EQ(w.role, WeightRole::kGate);
    }
  }
}

TEST(Weights, AuditListsEveryViolation) {
  std::mt19937_64 rng(1);
  const ArchSpec s = ArchSpec::of(ArchKind::kMHA);
  AttnWeights w = random_attn_weights(s, mha_dims(), rng);
  EXPECT_TRUE(audit_shapes(s, mha_dims(), w).empty());
  w.erase("K.1");
  w.at("Q.0") = Tensor({8, 3});
  w.emplace("bias", Tensor({8}));
  const auto issues = audit_shapes(s, mha_dims(), w);
  ASSERT_EQ(issues.size(), 3u);
  EXPECT_THROW(require_valid_weights(s, mha_dims(), w), ConfigError);
}

TEST(Weights, RandomWeightsCanZeroTheGate) {
  std::mt19937_64 rng(2);
  const ArchSpec s = ArchSpec::mfa_kr(KrVariant::kGated);
  const AttnWeights w = random_attn_weights(s, mfa_dims(), rng, 0.3, true);
  for (double a : w.at("alpha").data()) EXPECT_EQ(a, 0.0);
  EXPECT_EQ(indexed("Q", 12), "Q.12");
}

}  // namespace
}  // namespace gmha
