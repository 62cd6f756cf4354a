#include "gmha/capacity.hpp"

#include "gmha/errors.hpp"
#include "gmha/kvcache.hpp"
#include "gmha/weights.hpp"

namespace gmha {

std::size_t param_count_formula(const ArchSpec& spec, const ModelDims& dims) {
  validate(spec, dims);
  const std::size_t h = dims.hidden, n = dims.n_heads, d = dims.head_dim, c = dims.latent, g = dims.groups,
                    dr = dims.rope_dim;
  switch (spec.kind) {
    case ArchKind::kFPBA: return 2 * h * h * h;
    case ArchKind::kMHA: return 4 * h * h;
    case ArchKind::kMQA: return (2 * n + 2) * h * h / n;
    case ArchKind::kGQA: return (2 * n + 2 * g) * h * h / n;
    case ArchKind::kMLA: return h * (3 * c + dr + n * d) + n * c * (3 * d + dr);
    case ArchKind::kMFA:
    case ArchKind::kMFAKR: {
      std::size_t p = h * (3 * c + n * c) + n * c * c;
      if (!spec.factored_q) p = p - h * c - n * c * c + n * h * c;
      if (spec.kind == ArchKind::kMFAKR) {
        p -= h * c;
        if (*spec.kr_variant != KrVariant::kVanilla) p += c * c;
        if (*spec.kr_variant == KrVariant::kGated) p += c;
      }
      return p;
    }
  }
  return 0;
}

std::size_t count_params(const ArchSpec& spec, const ModelDims& dims) {
  std::size_t total = 0;
  for (const auto& ws : expected_weights(spec, dims)) total += shape_numel(ws.shape);
  return total;
}

CapacityReport capacity_report(const ArchSpec& spec, const ModelDims& dims, std::size_t elem_bytes) {
  validate(spec, dims);
  CapacityReport r;
  r.arch = spec;
  r.label = arch_label(spec);
  r.kv_bytes_per_token = cache_bytes_per_token(spec, dims, elem_bytes);
  r.param_count_formula = param_count_formula(spec, dims);
  r.param_count_measured = count_params(spec, dims);
  const std::size_t h = dims.hidden, n = dims.n_heads, d = dims.head_dim, c = dims.latent;
  switch (spec.kind) {
    case ArchKind::kFPBA:
      r.heads = h;
      r.frh = h;
      r.slsd = h;
      r.impractical = true;
      break;
    case ArchKind::kMHA:
      r.heads = n;
      r.frh = d;
      r.slsd = h;
      break;
    case ArchKind::kMQA:
      r.heads = n;
      r.frh = d;
      r.slsd = d;
      break;
    case ArchKind::kGQA:
      r.heads = n;
      r.frh = d;
      r.slsd = dims.groups * d;
      break;
    case ArchKind::kMLA:
      r.heads = n;
      r.frh = d;
      r.slsd = c;
      break;
    case ArchKind::kMFA:
    case ArchKind::kMFAKR:
      r.heads = n;
      r.frh = c;
      r.slsd = c;
      break;
  }
  r.ter = r.heads * r.frh;
  if (r.frh > r.slsd) {
    throw ConfigError(r.label + ": factorization rank per head (" + std::to_string(r.frh) +
                      ") exceeds the shared latent dimension (" + std::to_string(r.slsd) + ")");
  }
  return r;
}

}  // namespace gmha
