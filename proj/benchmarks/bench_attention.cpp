#include <benchmark/benchmark.h>

#include <random>

#include "gmha/attention.hpp"
#include "gmha/kvcache.hpp"
#include "gmha/model.hpp"
#include "gmha/ops.hpp"
#include "gmha/weights.hpp"

namespace {

using namespace gmha;

struct Case {
  ArchSpec spec;
  ModelDims dims;
};

Case make_case(int which) {
  ModelDims d;
  d.hidden = 256;
  switch (which) {
    case 0:
      d.n_heads = 8;
      d.head_dim = 32;
      return {ArchSpec::of(ArchKind::kMHA, PosEmbed::rope()), d};
    case 1:
      d.n_heads = 8;
      d.head_dim = 32;
      d.groups = 2;
      return {ArchSpec::of(ArchKind::kGQA, PosEmbed::rope()), d};
    case 2:
      d.n_heads = 8;
      d.head_dim = 32;
      return {ArchSpec::of(ArchKind::kMQA, PosEmbed::rope()), d};
    case 3:
      d.n_heads = 8;
      d.head_dim = 32;
      d.latent = 64;
      d.rope_dim = 16;
      return {ArchSpec::of(ArchKind::kMLA, PosEmbed::rope()), d};
    case 4:
      d.n_heads = 9;
      d.latent = d.head_dim = 32;
      return {ArchSpec::of(ArchKind::kMFA, PosEmbed::rope()), d};
    default:
      d.n_heads = 9;
      d.latent = d.head_dim = 32;
      return {ArchSpec::mfa_kr(KrVariant::kGated, PosEmbed::rope()), d};
  }
}

void BM_AttnForward(benchmark::State& state) {
  const Case c = make_case(static_cast<int>(state.range(0)));
  std::mt19937_64 rng(1);
  const AttnWeights w = random_attn_weights(c.spec, c.dims, rng);
  const Tensor x = random_tensor({static_cast<std::size_t>(state.range(1)), c.dims.hidden}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(attn_forward(c.spec, w, c.dims, x));
  state.SetLabel(arch_label(c.spec));
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_AttnForward)->ArgsProduct({{0, 1, 2, 3, 4, 5}, {64}})->Unit(benchmark::kMillisecond);

void BM_DecodeStep(benchmark::State& state) {
  const Case c = make_case(static_cast<int>(state.range(0)));
  const std::size_t context = static_cast<std::size_t>(state.range(1));
  std::mt19937_64 rng(2);
  const AttnWeights w = random_attn_weights(c.spec, c.dims, rng);
  const Tensor x = random_tensor({context + 1, c.dims.hidden}, rng);
  auto row = [&](std::size_t t) {
    return Tensor({1, c.dims.hidden}, std::vector<double>(x.row(t).begin(), x.row(t).end()));
  };
  LayerCache prefix(cache_slots(c.spec, c.dims));
  for (std::size_t t = 0; t < context; ++t) decode_step(c.spec, w, c.dims, prefix, row(t), t);
  const Tensor last = row(context);
  for (auto _ : state) {
    state.PauseTiming();
    LayerCache cache = prefix;
    state.ResumeTiming();
    benchmark::DoNotOptimize(decode_step(c.spec, w, c.dims, cache, last, context));
  }
  state.SetLabel(arch_label(c.spec));
  state.counters["cache_bytes_per_token"] = static_cast<double>(cache_bytes_per_token(c.spec, c.dims));
}
BENCHMARK(BM_DecodeStep)->ArgsProduct({{0, 1, 2, 3, 4, 5}, {256}})->Unit(benchmark::kMicrosecond);

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  const Tensor a = random_tensor({n, n}, rng), b = random_tensor({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(4)->Range(16, 256);

void BM_TrainStepForwardBackward(benchmark::State& state) {
  ModelDims d;
  d.hidden = 64;
  d.layers = 2;
  d.n_heads = 4;
  d.latent = d.head_dim = 32;
  d.ffn = 128;
  ToyLM model = make_model(ArchSpec::of(ArchKind::kMFA, PosEmbed::rope()), d);
  init_weights(model, 4);
  for (auto& [name, p] : model.params) p.set_requires_grad(true);
  std::vector<int> tokens(65);
  for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] = static_cast<int>((i * 37) % 256);
  const std::span<const int> seq(tokens);
  for (auto _ : state) {
    Graph g;
    const Var ce = g.cross_entropy(model_logits(g, model, seq.first(64)), seq.subspan(1));
    g.backward(ce);
  }
}
BENCHMARK(BM_TrainStepForwardBackward)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
