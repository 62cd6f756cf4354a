#include "gmha/cli/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "gmha/attention.hpp"
#include "gmha/capacity.hpp"
#include "gmha/errors.hpp"
#include "gmha/kvcache.hpp"
#include "gmha/linalg.hpp"
#include "gmha/weights.hpp"

namespace gmha::cli {

namespace {

std::size_t pick(std::mt19937_64& rng, std::initializer_list<std::size_t> values) {
  std::uniform_int_distribution<std::size_t> d(0, values.size() - 1);
  return *(values.begin() + d(rng));
}

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Tensor row_of(const Tensor& x, std::size_t t) {
  auto r = x.row(t);
  return Tensor({1, x.cols()}, std::vector<double>(r.begin(), r.end()));
}

double decode_deviation(const ArchSpec& spec, const AttnWeights& w, const ModelDims& dims, const Tensor& x) {
  const Tensor full = attn_forward(spec, w, dims, x);
  LayerCache cache(cache_slots(spec, dims));
  double dev = 0.0;
  for (std::size_t t = 0; t < x.rows(); ++t) {
    const Tensor y = decode_step(spec, w, dims, cache, row_of(x, t), t);
    for (std::size_t j = 0; j < y.cols(); ++j) dev = std::max(dev, std::abs(y(0, j) - full(t, j)));
  }
  std::size_t per_token = 0;
  for (const auto& s : cache_slots(spec, dims)) per_token += s.dim;
  if (cache.element_count() != per_token * x.rows()) return std::numeric_limits<double>::infinity();
  return dev;
}

// GQA with g == n is MHA and with g == 1 is MQA under a renaming of K/V.
double degeneration_deviation(const ArchSpec& gqa, const ModelDims& base, std::mt19937_64& rng, const Tensor& x) {
  double dev = 0.0;
  for (std::size_t groups : {base.n_heads, std::size_t{1}}) {
    ModelDims d = base;
    d.groups = groups;
    const AttnWeights w = random_attn_weights(gqa, d, rng);
    ArchSpec other = gqa;
    AttnWeights mapped;
    for (std::size_t h = 0; h < d.n_heads; ++h) {
      mapped.emplace(indexed("Q", h), w.at(indexed("Q", h)));
      mapped.emplace(indexed("O", h), w.at(indexed("O", h)));
    }
    if (groups == d.n_heads) {
      other.kind = ArchKind::kMHA;
      for (std::size_t h = 0; h < d.n_heads; ++h) {
        mapped.emplace(indexed("K", h), w.at(indexed("K", h)));
        mapped.emplace(indexed("V", h), w.at(indexed("V", h)));
      }
    } else {
      other.kind = ArchKind::kMQA;
      mapped.emplace("K", w.at(indexed("K", 0)));
      mapped.emplace("V", w.at(indexed("V", 0)));
    }
    dev = std::max(dev, max_abs_diff(attn_forward(gqa, w, d, x), attn_forward(other, mapped, d, x)));
  }
  return dev;
}

double rank_excess(const ArchSpec& spec, const ModelDims& dims, const AttnWeights& w) {
  const std::size_t frh = capacity_report(spec, dims).frh;
  double worst = 0.0;
  for (const auto& head : fold_heads(spec, dims, w)) {
    const auto sv = singular_values(head.qk);
    if (sv.empty() || sv.front() == 0.0 || sv.size() <= frh) continue;
    worst = std::max(worst, sv[frh] / sv.front());
  }
  return worst;
}

}  // namespace

std::string to_string(OracleStatus s) {
  switch (s) {
    case OracleStatus::kPass: return "pass";
    case OracleStatus::kFail: return "fail";
    case OracleStatus::kUnsupported: return "unsupported-combination";
    case OracleStatus::kNotApplicable: return "not-applicable";
  }
  return "?";
}

std::vector<ArchSpec> default_archs() {
  return {ArchSpec::of(ArchKind::kFPBA), ArchSpec::of(ArchKind::kMHA), ArchSpec::of(ArchKind::kMQA),
          ArchSpec::of(ArchKind::kGQA),  ArchSpec::of(ArchKind::kMLA), ArchSpec::of(ArchKind::kMFA),
          ArchSpec::mfa_kr(KrVariant::kGated)};
}

ModelDims random_oracle_dims(const ArchSpec& spec, std::mt19937_64& rng) {
  ModelDims d;
  switch (spec.kind) {
    case ArchKind::kFPBA:
      d.hidden = pick(rng, {2, 4, 6, 8});
      break;
    case ArchKind::kMHA:
    case ArchKind::kMQA:
      d.n_heads = pick(rng, {1, 2, 4});
      d.head_dim = pick(rng, {2, 4});
      d.hidden = d.n_heads * d.head_dim;
      break;
    case ArchKind::kGQA:
      d.n_heads = pick(rng, {2, 4});
      d.head_dim = pick(rng, {2, 4});
      d.hidden = d.n_heads * d.head_dim;
      d.groups = d.n_heads == 4 ? pick(rng, {1, 2, 4}) : pick(rng, {1, 2});
      break;
    case ArchKind::kMLA:
      d.n_heads = uniform(rng, 1, 4);
      d.head_dim = pick(rng, {2, 4});
      d.latent = d.head_dim + pick(rng, {0, 2, 4});
      d.hidden = uniform(rng, std::max<std::size_t>(4, d.latent), 16);
      d.rope_dim = spec.pos_embed.kind == PosEmbedKind::kRope ? pick(rng, {2, 4}) : pick(rng, {0, 2});
      break;
    case ArchKind::kMFA:
    case ArchKind::kMFAKR:
      d.n_heads = uniform(rng, 1, 4);
      d.latent = pick(rng, {2, 4, 6, 8});
      d.head_dim = d.latent;
      d.hidden = uniform(rng, std::max<std::size_t>(4, d.latent), 16);
      break;
  }
  validate(spec, d);
  return d;
}

std::vector<OracleResult> run_equiv(const EquivOptions& opts) {
  std::vector<OracleResult> out;
  if (opts.trials == 0) return out;
  std::mt19937_64 rng(opts.seed);
  for (ArchSpec spec : opts.archs) {
    spec.pos_embed.kind = opts.pos_embed;
    const std::string label = arch_label(spec);
    const bool rope = opts.pos_embed == PosEmbedKind::kRope;
    const bool mha_family =
        spec.kind == ArchKind::kMHA || spec.kind == ArchKind::kMQA || spec.kind == ArchKind::kGQA;

    OracleResult dual{label, "dual_formulation", OracleStatus::kPass, 0, 0.0, opts.tolerance};
    OracleResult fpba{label, "grouped_fpba", OracleStatus::kPass, 0, 0.0, opts.tolerance};
    OracleResult decode{label, "incremental_decode", OracleStatus::kPass, 0, 0.0, opts.tolerance};
    OracleResult degen{label, "degeneration", OracleStatus::kPass, 0, 0.0, opts.tolerance};
    OracleResult rank{label, "rank_bound", OracleStatus::kPass, 0, 0.0, opts.rank_tolerance};
    if (rope) dual.status = fpba.status = rank.status = OracleStatus::kUnsupported;
    if (!rope && !mha_family) fpba.status = OracleStatus::kNotApplicable;
    if (opts.pos_embed != PosEmbedKind::kNone && mha_family) fpba.status = OracleStatus::kUnsupported;
    if (spec.kind != ArchKind::kGQA) degen.status = OracleStatus::kNotApplicable;

    auto record = [](OracleResult& r, double dev) {
      r.trials += 1;
      r.max_deviation = std::max(r.max_deviation, dev);
      if (!(dev <= r.tolerance)) r.status = OracleStatus::kFail;
    };

    for (std::size_t trial = 0; trial < opts.trials; ++trial) {
      const ModelDims dims = random_oracle_dims(spec, rng);
      const std::size_t t = uniform(rng, 1, 8);
      const AttnWeights w = random_attn_weights(spec, dims, rng);
      const Tensor x = random_tensor({t, dims.hidden}, rng);
      const Tensor y = attn_forward(spec, w, dims, x);

      if (dual.status != OracleStatus::kUnsupported) {
        record(dual, max_abs_diff(y, attn_forward_factored(spec, w, dims, x)));
      }
      if (fpba.status == OracleStatus::kPass || fpba.status == OracleStatus::kFail) {
        const GroupedFpba g = grouped_fpba_equivalent(spec, dims, w);
        record(fpba, max_abs_diff(y, fpba_forward(x, g.w, g.u, g.scale, g.channel_group)));
      }
      record(decode, decode_deviation(spec, w, dims, x));
      if (degen.status != OracleStatus::kNotApplicable) record(degen, degeneration_deviation(spec, dims, rng, x));
      if (rank.status != OracleStatus::kUnsupported) {
        ModelDims rd = dims;
        rd.rope_dim = 0;  // the table's per-head rank counts the content path only
        const AttnWeights rw = spec.kind == ArchKind::kMLA ? random_attn_weights(spec, rd, rng) : w;
        const double excess = rank_excess(spec, rd, rw);
        rank.trials += 1;
        rank.max_deviation = std::max(rank.max_deviation, excess);
        if (!(excess < opts.rank_tolerance)) rank.status = OracleStatus::kFail;
      }
    }
    for (auto* r : {&dual, &fpba, &decode, &degen, &rank}) out.push_back(*r);
  }
  return out;
}

bool all_passed(const std::vector<OracleResult>& results) {
  return std::none_of(results.begin(), results.end(),
                      [](const OracleResult& r) { return r.status == OracleStatus::kFail; });
}

ModelDims gradcheck_dims(ArchKind kind) {
  ModelDims d;
  d.hidden = 16;
  d.layers = 2;
  d.vocab = 12;
  d.ffn = 24;
  switch (kind) {
    case ArchKind::kFPBA: break;
    case ArchKind::kMHA:
    case ArchKind::kMQA: d.n_heads = 4; d.head_dim = 4; break;
    case ArchKind::kGQA: d.n_heads = 4; d.head_dim = 4; d.groups = 2; break;
    case ArchKind::kMLA: d.n_heads = 4; d.head_dim = 4; d.latent = 8; d.rope_dim = 2; break;
    case ArchKind::kMFA:
    case ArchKind::kMFAKR: d.n_heads = 3; d.latent = 8; d.head_dim = 8; break;
  }
  return d;
}

}  // namespace gmha::cli
