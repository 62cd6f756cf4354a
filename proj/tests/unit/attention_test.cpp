#include <gtest/gtest.h>

#include <random>
#include <string>

#include "gmha/attention.hpp"
#include "gmha/errors.hpp"
#include "gmha/ops.hpp"
#include "reference.hpp"
#include "test_util.hpp"

namespace gmha {
namespace {

struct Case {
  std::string name;
  ArchSpec spec;
  ModelDims dims;
};

ModelDims dims(std::size_t h, std::size_t n, std::size_t d, std::size_t c = 0, std::size_t g = 1,
               std::size_t dr = 0) {
  ModelDims m;
  m.hidden = h;
  m.n_heads = n;
  m.head_dim = d;
  m.latent = c;
  m.groups = g;
  m.rope_dim = dr;
  return m;
}

std::vector<Case> cases(PosEmbed pos) {
  std::vector<Case> out{
      {"fpba", ArchSpec::of(ArchKind::kFPBA, pos), dims(4, 1, 0)},
      {"mha", ArchSpec::of(ArchKind::kMHA, pos), dims(8, 2, 4)},
      {"mqa", ArchSpec::of(ArchKind::kMQA, pos), dims(8, 4, 2)},
      {"gqa", ArchSpec::of(ArchKind::kGQA, pos), dims(8, 4, 2, 0, 2)},
      {"mla", ArchSpec::of(ArchKind::kMLA, pos), dims(10, 3, 2, 6, 1, 2)},
      {"mfa", ArchSpec::of(ArchKind::kMFA, pos), dims(10, 3, 4, 4)},
  };
  for (auto v : {KrVariant::kVanilla, KrVariant::kExtraProj, KrVariant::kResidual, KrVariant::kGated}) {
    out.push_back({"mfa-kr-" + std::string(to_string(v)), ArchSpec::mfa_kr(v, pos), dims(10, 3, 4, 4)});
  }
  ArchSpec unf = ArchSpec::of(ArchKind::kMFA, pos);
  unf.factored_q = false;
  out.push_back({"mfa-unfactored-q", unf, dims(10, 2, 4, 4)});
  return out;
}

TEST(Attention, MatchesNaiveReferenceForEveryArchAndPosition) {
  std::mt19937_64 rng(7);
  for (auto pos : {PosEmbed::none(), PosEmbed::rope(50.0), PosEmbed::alibi()}) {
    for (const auto& c : cases(pos)) {
      const AttnWeights w = random_attn_weights(c.spec, c.dims, rng);
      const Tensor x = testing::randn({6, c.dims.hidden}, rng);
      EXPECT_LE(max_abs_diff(attn_forward(c.spec, w, c.dims, x), ref::attention(c.spec, c.dims, w, x)), 1e-12)
          << c.name << " pos=" << to_string(pos.kind);
    }
  }
}

TEST(Attention, FactoredFormAgrees) {
  std::mt19937_64 rng(8);
  for (auto pos : {PosEmbed::none(), PosEmbed::alibi()}) {
    for (const auto& c : cases(pos)) {
      const AttnWeights w = random_attn_weights(c.spec, c.dims, rng);
      const Tensor x = testing::randn({5, c.dims.hidden}, rng);
      EXPECT_LE(max_abs_diff(attn_forward(c.spec, w, c.dims, x), attn_forward_factored(c.spec, w, c.dims, x)), 1e-12)
          << c.name;
    }
  }
}

TEST(Attention, FactoredFormRejectsRope) {
  std::mt19937_64 rng(9);
  const Case c = cases(PosEmbed::rope())[5];
  const AttnWeights w = random_attn_weights(c.spec, c.dims, rng);
  try {
    attn_forward_factored(c.spec, w, c.dims, testing::randn({3, c.dims.hidden}, rng));
    FAIL() << "expected UnsupportedError";
  } catch (const UnsupportedError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("unsupported-combination", 0), 0u);
  }
}

TEST(Attention, IsCausal) {
  std::mt19937_64 rng(10);
  for (const auto& c : cases(PosEmbed::rope())) {
    const AttnWeights w = random_attn_weights(c.spec, c.dims, rng);
    Tensor x = testing::randn({5, c.dims.hidden}, rng);
    const Tensor before = attn_forward(c.spec, w, c.dims, x);
    for (std::size_t j = 0; j < c.dims.hidden; ++j) x(4, j) += 1.0;
    const Tensor after = attn_forward(c.spec, w, c.dims, x);
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t j = 0; j < c.dims.hidden; ++j) EXPECT_EQ(before(t, j), after(t, j)) << c.name;
  }
}

TEST(Attention, RejectsBadInputs) {
  std::mt19937_64 rng(11);
  const Case c = cases(PosEmbed::none())[1];
  AttnWeights w = random_attn_weights(c.spec, c.dims, rng);
  EXPECT_THROW(attn_forward(c.spec, w, c.dims, Tensor({3, 7})), DimensionError);
  w.erase("V.1");
  EXPECT_THROW(attn_forward(c.spec, w, c.dims, Tensor({3, 8})), ConfigError);
}

TEST(Attention, FpbaDefaultScaleAndChannelGroups) {
  std::mt19937_64 rng(12);
  const ModelDims d = dims(4, 1, 0);
  const ArchSpec s = ArchSpec::of(ArchKind::kFPBA);
  const AttnWeights w = random_attn_weights(s, d, rng);
  std::vector<Tensor> ws, us;
  for (std::size_t c = 0; c < 4; ++c) {
    ws.push_back(w.at(indexed("W", c)));
    us.push_back(w.at(indexed("U", c)));
  }
  const Tensor x = testing::randn({5, 4}, rng);
  EXPECT_LE(max_abs_diff(fpba_forward(x, ws, us), ref::attention(s, d, w, x)), 1e-12);

  // Two shared parameter groups behave like four channels holding copies.
  const std::vector<std::size_t> group{0, 0, 1, 1};
  const std::vector<Tensor> w2{ws[0], ws[3]}, u2{us[0], us[3]};
  const std::vector<Tensor> w4{ws[0], ws[0], ws[3], ws[3]}, u4{us[0], us[0], us[3], us[3]};
  EXPECT_LE(max_abs_diff(fpba_forward(x, w2, u2, std::nullopt, group), fpba_forward(x, w4, u4)), 1e-14);
}

TEST(Attention, GroupedFpbaReproducesMhaFamily) {
  std::mt19937_64 rng(13);
  for (const auto& c : cases(PosEmbed::none())) {
    const ArchKind k = c.spec.kind;
    if (k != ArchKind::kMHA && k != ArchKind::kMQA && k != ArchKind::kGQA) continue;
    const AttnWeights w = random_attn_weights(c.spec, c.dims, rng);
    const Tensor x = testing::randn({7, c.dims.hidden}, rng);
    const GroupedFpba g = grouped_fpba_equivalent(c.spec, c.dims, w);
    EXPECT_EQ(g.channel_group.size(), c.dims.hidden);
    EXPECT_LE(max_abs_diff(fpba_forward(x, g.w, g.u, g.scale, g.channel_group), attn_forward(c.spec, w, c.dims, x)),
              1e-12)
        << c.name;
  }
  const Case mfa = cases(PosEmbed::none())[5];
  EXPECT_THROW(grouped_fpba_equivalent(mfa.spec, mfa.dims, random_attn_weights(mfa.spec, mfa.dims, rng)),
               UnsupportedError);
}

TEST(Attention, FoldedHeadsHaveExpectedShapes) {
  std::mt19937_64 rng(14);
  const Case c = cases(PosEmbed::none())[4];
  const auto heads = fold_heads(c.spec, c.dims, random_attn_weights(c.spec, c.dims, rng));
  ASSERT_EQ(heads.size(), 3u);
  EXPECT_EQ(heads[0].qk.shape(), (Shape{10, 10}));
  EXPECT_EQ(heads[0].vo.shape(), (Shape{10, 10}));
}

// Value paths derived from the cached key.
TEST(KeyReuse, VariantLadder) {
  std::mt19937_64 rng(15);
  const Tensor k = testing::randn({4, 3}, rng);
  const Tensor n = testing::randn({3, 3}, rng);
  const Tensor kn = ref::matmul(k, n);
  const Tensor zero({3}, 0.0), one({3}, 1.0);

  EXPECT_EQ(kr_value_from_key(KrVariant::kVanilla, k, nullptr, nullptr), k);
  EXPECT_LE(max_abs_diff(kr_value_from_key(KrVariant::kExtraProj, k, &n, nullptr), kn), 1e-14);
  EXPECT_LE(max_abs_diff(kr_value_from_key(KrVariant::kResidual, k, &n, nullptr), ops::add(k, kn)), 1e-14);
  EXPECT_EQ(kr_value_from_key(KrVariant::kGated, k, &n, &zero), k);
  EXPECT_EQ(kr_value_from_key(KrVariant::kGated, k, &n, &one), kr_value_from_key(KrVariant::kResidual, k, &n, nullptr));

  EXPECT_THROW(kr_value_from_key(KrVariant::kResidual, k, &n, &one), ConfigError);
  EXPECT_THROW(kr_value_from_key(KrVariant::kGated, k, &n, nullptr), ConfigError);
  EXPECT_THROW(kr_value_from_key(KrVariant::kExtraProj, k, nullptr, nullptr), ConfigError);
}

TEST(KeyReuse, GatedAtZeroIsMfaWithSharedKeyValueProjection) {
  std::mt19937_64 rng(16);
  for (auto pos : {PosEmbed::none(), PosEmbed::rope(), PosEmbed::alibi()}) {
    const ModelDims d = dims(10, 3, 4, 4);
    const ArchSpec kr = ArchSpec::mfa_kr(KrVariant::kGated, pos);
    const AttnWeights w = random_attn_weights(kr, d, rng, 0.3, true);
    AttnWeights mfa_w = w;
    mfa_w.erase("N");
    mfa_w.erase("alpha");
    mfa_w.emplace("S_v", w.at("S_k"));
    const Tensor x = testing::randn({6, 10}, rng);
    EXPECT_LE(max_abs_diff(attn_forward(kr, w, d, x), attn_forward(ArchSpec::of(ArchKind::kMFA, pos), mfa_w, d, x)),
              1e-12);
  }
}

TEST(KeyReuse, FoldedValueProjectionWithoutRope) {
  // S_v = S_k (I + N diag(alpha)) reproduces the gated variant as plain MFA.
  std::mt19937_64 rng(17);
  const ModelDims d = dims(10, 2, 4, 4);
  const ArchSpec kr = ArchSpec::mfa_kr(KrVariant::kGated);
  const AttnWeights w = random_attn_weights(kr, d, rng);
  Tensor mix = Tensor::identity(4);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) mix(r, c) += w.at("N")(r, c) * w.at("alpha")[c];
  AttnWeights mfa_w = w;
  mfa_w.erase("N");
  mfa_w.erase("alpha");
  mfa_w.emplace("S_v", ref::matmul(w.at("S_k"), mix));
  const Tensor x = testing::randn({5, 10}, rng);
  EXPECT_LE(max_abs_diff(attn_forward(kr, w, d, x), attn_forward(ArchSpec::of(ArchKind::kMFA), mfa_w, d, x)), 1e-12);
}

}  // namespace
}  // namespace gmha
