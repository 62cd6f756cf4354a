#include <gtest/gtest.h>

#include <random>

#include "gmha/attention.hpp"
#include "gmha/errors.hpp"
#include "gmha/kvcache.hpp"
#include "reference.hpp"
#include "test_util.hpp"

namespace gmha {
namespace {

struct Config {
  ArchSpec spec;
  ModelDims dims;
};

ModelDims make(std::size_t h, std::size_t n, std::size_t d, std::size_t c, std::size_t g, std::size_t dr,
               std::size_t layers = 1) {
  ModelDims m;
  m.hidden = h;
  m.n_heads = n;
  m.head_dim = d;
  m.latent = c;
  m.groups = g;
  m.rope_dim = dr;
  m.layers = layers;
  return m;
}

std::vector<Config> configs(PosEmbed pos) {
  return {
      {ArchSpec::of(ArchKind::kFPBA, pos), make(4, 1, 0, 0, 1, 0)},
      {ArchSpec::of(ArchKind::kMHA, pos), make(8, 2, 4, 0, 1, 0)},
      {ArchSpec::of(ArchKind::kMQA, pos), make(8, 4, 2, 0, 1, 0)},
      {ArchSpec::of(ArchKind::kGQA, pos), make(8, 4, 2, 0, 2, 0)},
      {ArchSpec::of(ArchKind::kMLA, pos), make(10, 3, 2, 6, 1, 4)},
      {ArchSpec::of(ArchKind::kMFA, pos), make(10, 3, 4, 4, 1, 0)},
      {ArchSpec::mfa_kr(KrVariant::kVanilla, pos), make(10, 3, 4, 4, 1, 0)},
      {ArchSpec::mfa_kr(KrVariant::kExtraProj, pos), make(10, 3, 4, 4, 1, 0)},
      {ArchSpec::mfa_kr(KrVariant::kResidual, pos), make(10, 3, 4, 4, 1, 0)},
      {ArchSpec::mfa_kr(KrVariant::kGated, pos), make(10, 3, 4, 4, 1, 0)},
  };
}

Tensor row_of(const Tensor& x, std::size_t t) {
  return Tensor({1, x.cols()}, std::vector<double>(x.row(t).begin(), x.row(t).end()));
}

TEST(KvCache, SlotLayout) {
  const auto mla = cache_slots(ArchSpec::of(ArchKind::kMLA), make(10, 3, 2, 6, 1, 4));
  ASSERT_EQ(mla.size(), 3u);
  EXPECT_EQ(mla[0].name, "k_latent");
  EXPECT_EQ(mla[2].dim, 4u);
  const auto kr = cache_slots(ArchSpec::mfa_kr(KrVariant::kGated), make(10, 3, 4, 4, 1, 0));
  ASSERT_EQ(kr.size(), 1u);
  EXPECT_EQ(kr[0].name, "k");
  EXPECT_EQ(kr[0].dim, 4u);
  EXPECT_EQ(cache_slots(ArchSpec::of(ArchKind::kGQA), make(8, 4, 2, 0, 2, 0))[1].dim, 4u);
}

TEST(KvCache, BytesPerTokenMatchesClosedForm) {
  std::mt19937_64 rng(1);
  for (const auto& c : configs(PosEmbed::none())) {
    for (std::size_t layers : {1u, 3u}) {
      ModelDims d = c.dims;
      d.layers = layers;
      for (std::size_t eb : {1u, 2u, 4u}) {
        EXPECT_EQ(cache_bytes_per_token(c.spec, d, eb), ref::cache_bytes(c.spec, d, eb)) << arch_label(c.spec);
        std::size_t slots = 0;
        for (const auto& s : cache_slots(c.spec, d)) slots += s.dim;
        EXPECT_EQ(cache_bytes_per_token(c.spec, d, eb), slots * layers * eb);
      }
    }
  }
}

TEST(KvCache, DecodeMatchesFullForward) {
  std::mt19937_64 rng(2);
  for (auto pos : {PosEmbed::none(), PosEmbed::rope(100.0), PosEmbed::alibi()}) {
    for (const auto& c : configs(pos)) {
      const AttnWeights w = random_attn_weights(c.spec, c.dims, rng);
      const Tensor x = testing::randn({9, c.dims.hidden}, rng);
      const Tensor full = attn_forward(c.spec, w, c.dims, x);
      LayerCache cache(cache_slots(c.spec, c.dims));
      for (std::size_t t = 0; t < 9; ++t) {
        const Tensor y = decode_step(c.spec, w, c.dims, cache, row_of(x, t), t);
        for (std::size_t j = 0; j < c.dims.hidden; ++j) {
          EXPECT_NEAR(y(0, j), full(t, j), 1e-10) << arch_label(c.spec) << " " << to_string(pos.kind) << " t=" << t;
        }
      }
      EXPECT_EQ(cache.tokens(), 9u);
    }
  }
}

TEST(KvCache, KeyReuseCachesTheRawKey) {
  std::mt19937_64 rng(3);
  const Config c = configs(PosEmbed::rope())[9];
  const AttnWeights w = random_attn_weights(c.spec, c.dims, rng);
  const Tensor x = testing::randn({3, c.dims.hidden}, rng);
  LayerCache cache(cache_slots(c.spec, c.dims));
  for (std::size_t t = 0; t < 3; ++t) decode_step(c.spec, w, c.dims, cache, row_of(x, t), t);
  const Tensor raw = ref::matmul(x, w.at("S_k"));
  EXPECT_LE(max_abs_diff(cache.matrix("k"), raw), 1e-14);
}

TEST(KvCache, StateAccounting) {
  ModelDims d = make(10, 3, 4, 4, 1, 0, 3);
  const ArchSpec s = ArchSpec::of(ArchKind::kMFA);
  KvCacheState state(s, d, 2);
  EXPECT_EQ(state.layer_count(), 3u);
  EXPECT_EQ(state.tokens(), 0u);
  std::vector<std::vector<double>> rows{std::vector<double>(4, 1.0), std::vector<double>(4, 2.0)};
  for (std::size_t l = 0; l < 3; ++l) state.layer(l).append(rows);
  EXPECT_EQ(state.tokens(), 1u);
  EXPECT_EQ(state.element_count(), 24u);
  EXPECT_EQ(state.measured_bytes(), cache_bytes_per_token(s, d, 2));
  EXPECT_THROW(KvCacheState(s, d, 0), ConfigError);
}

TEST(KvCache, AppendAndReadErrors) {
  LayerCache cache({{"k", 2}, {"v", 3}});
  const std::vector<std::vector<double>> bad{std::vector<double>(2), std::vector<double>(2)};
  EXPECT_THROW(cache.append(bad), DimensionError);
  const std::vector<std::vector<double>> one{std::vector<double>(2)};
  EXPECT_THROW(cache.append(one), DimensionError);
  EXPECT_THROW((void)cache.row("k", 0), IndexError);
  EXPECT_THROW((void)cache.slot_dim("q"), IndexError);
  const std::vector<std::vector<double>> good{{1.0, 2.0}, {3.0, 4.0, 5.0}};
  cache.append(good);
  EXPECT_EQ(cache.row("v", 0)[2], 5.0);
  EXPECT_EQ(cache.element_count(), 5u);
}

TEST(KvCache, DecodeStepOrderingAndLayoutChecks) {
  std::mt19937_64 rng(4);
  const Config c = configs(PosEmbed::none())[1];
  const AttnWeights w = random_attn_weights(c.spec, c.dims, rng);
  LayerCache cache(cache_slots(c.spec, c.dims));
  const Tensor x = testing::randn({1, c.dims.hidden}, rng);
  EXPECT_THROW(decode_step(c.spec, w, c.dims, cache, x, 1), OrderingError);
  decode_step(c.spec, w, c.dims, cache, x, 0);
  EXPECT_THROW(decode_step(c.spec, w, c.dims, cache, x, 0), OrderingError);
  EXPECT_THROW(decode_step(c.spec, w, c.dims, cache, testing::randn({2, c.dims.hidden}, rng), 1), DimensionError);

  LayerCache wrong(cache_slots(ArchSpec::of(ArchKind::kMQA), c.dims));
  EXPECT_THROW(decode_step(c.spec, w, c.dims, wrong, x, 0), ConfigError);
}

}  // namespace
}  // namespace gmha
