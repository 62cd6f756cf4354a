#include "gmha/arch.hpp"

#include <cmath>
#include <string>

#include "gmha/errors.hpp"

namespace gmha {

ArchSpec ArchSpec::of(ArchKind kind, PosEmbed pos) {
  ArchSpec s;
  s.kind = kind;
  s.pos_embed = pos;
  if (kind == ArchKind::kMFAKR) s.kr_variant = KrVariant::kGated;
  return s;
}

ArchSpec ArchSpec::mfa_kr(KrVariant variant, PosEmbed pos) {
  ArchSpec s = of(ArchKind::kMFAKR, pos);
  s.kr_variant = variant;
  return s;
}

std::string_view to_string(ArchKind kind) {
  switch (kind) {
    case ArchKind::kFPBA: return "fpba";
    case ArchKind::kMHA: return "mha";
    case ArchKind::kMQA: return "mqa";
    case ArchKind::kGQA: return "gqa";
    case ArchKind::kMLA: return "mla";
    case ArchKind::kMFA: return "mfa";
    case ArchKind::kMFAKR: return "mfa-kr";
  }
  return "?";
}

std::string_view to_string(KrVariant variant) {
  switch (variant) {
    case KrVariant::kVanilla: return "vanilla";
    case KrVariant::kExtraProj: return "extra_proj";
    case KrVariant::kResidual: return "residual";
    case KrVariant::kGated: return "gated";
  }
  return "?";
}

std::string_view to_string(PosEmbedKind kind) {
  switch (kind) {
    case PosEmbedKind::kNone: return "none";
    case PosEmbedKind::kRope: return "rope";
    case PosEmbedKind::kAlibi: return "alibi";
  }
  return "?";
}

std::string arch_label(const ArchSpec& spec) {
  std::string s(to_string(spec.kind));
  if (spec.kind == ArchKind::kMFAKR && spec.kr_variant && *spec.kr_variant != KrVariant::kGated) {
    s += "(" + std::string(to_string(*spec.kr_variant)) + ")";
  }
  if ((spec.kind == ArchKind::kMFA || spec.kind == ArchKind::kMFAKR) && !spec.factored_q) s += "[unfactored-q]";
  return s;
}

ArchKind parse_arch_kind(std::string_view s) {
  for (auto k : {ArchKind::kFPBA, ArchKind::kMHA, ArchKind::kMQA, ArchKind::kGQA, ArchKind::kMLA, ArchKind::kMFA,
                 ArchKind::kMFAKR}) {
    if (to_string(k) == s) return k;
  }
  if (s == "mfa_kr" || s == "mfakr") return ArchKind::kMFAKR;
  throw ConfigError("unknown architecture '" + std::string(s) + "'");
}

KrVariant parse_kr_variant(std::string_view s) {
  for (auto v : {KrVariant::kVanilla, KrVariant::kExtraProj, KrVariant::kResidual, KrVariant::kGated}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown kr_variant '" + std::string(s) + "'");
}

PosEmbedKind parse_pos_embed(std::string_view s) {
  for (auto k : {PosEmbedKind::kNone, PosEmbedKind::kRope, PosEmbedKind::kAlibi}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown pos_embed '" + std::string(s) + "'");
}

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

void require_even_for_rope(const ArchSpec& spec, std::size_t d, const char* what) {
  if (spec.pos_embed.kind == PosEmbedKind::kRope) {
    require(d % 2 == 0, std::string("RoPE needs an even ") + what + ", got " + std::to_string(d));
  }
}

}  // namespace

void validate(const ArchSpec& spec, const ModelDims& dims) {
  const auto label = std::string(to_string(spec.kind));
  require(dims.hidden > 0, "hidden size must be positive");
  require(dims.layers > 0, "layer count must be positive");
  require(spec.kr_variant.has_value() == (spec.kind == ArchKind::kMFAKR),
          "kr_variant must be set exactly when the architecture is mfa-kr");
  require(spec.factored_q || spec.kind == ArchKind::kMFA || spec.kind == ArchKind::kMFAKR,
          "factored_q=false is only defined for mfa / mfa-kr");
  if (spec.score_scale) require(std::isfinite(*spec.score_scale) && *spec.score_scale > 0, "score_scale must be positive");
  if (spec.pos_embed.kind == PosEmbedKind::kRope) require(spec.pos_embed.rope_base > 1.0, "rope base must exceed 1");

  switch (spec.kind) {
    case ArchKind::kFPBA:
      require_even_for_rope(spec, dims.hidden, "hidden size");
      break;
    case ArchKind::kMHA:
    case ArchKind::kMQA:
    case ArchKind::kGQA:
      require(dims.n_heads > 0 && dims.head_dim > 0, label + ": n_heads and head_dim must be positive");
      require(dims.n_heads * dims.head_dim == dims.hidden,
              label + ": n_heads * head_dim (" + std::to_string(dims.n_heads * dims.head_dim) +
                  ") must equal hidden size (" + std::to_string(dims.hidden) + ")");
      if (spec.kind == ArchKind::kGQA) {
        require(dims.groups > 0 && dims.n_heads % dims.groups == 0, "gqa: groups must divide n_heads");
      }
      require_even_for_rope(spec, dims.head_dim, "head_dim");
      break;
    case ArchKind::kMLA:
      require(dims.n_heads > 0 && dims.head_dim > 0 && dims.latent > 0,
              "mla: n_heads, head_dim and latent must be positive");
      if (spec.pos_embed.kind == PosEmbedKind::kRope) {
        require(dims.rope_dim > 0, "mla: RoPE requested but rope_dim (d_r) is 0");
        require_even_for_rope(spec, dims.rope_dim, "rope_dim");
      }
      break;
    case ArchKind::kMFA:
    case ArchKind::kMFAKR:
      require(dims.n_heads > 0 && dims.latent > 0, label + ": n_heads and latent must be positive");
      require(dims.head_dim == dims.latent, label + ": head_dim must equal latent (each head has rank C)");
      require_even_for_rope(spec, dims.latent, "latent");
      break;
  }
}

std::size_t head_count(const ArchSpec& spec, const ModelDims& dims) {
  return spec.kind == ArchKind::kFPBA ? dims.hidden : dims.n_heads;
}

std::size_t qk_dot_dim(const ArchSpec& spec, const ModelDims& dims) {
  switch (spec.kind) {
    case ArchKind::kFPBA: return dims.hidden;
    case ArchKind::kMHA:
    case ArchKind::kMQA:
    case ArchKind::kGQA: return dims.head_dim;
    case ArchKind::kMLA: return dims.head_dim + dims.rope_dim;
    case ArchKind::kMFA:
    case ArchKind::kMFAKR: return dims.latent;
  }
  return 1;
}

double score_scale(const ArchSpec& spec, const ModelDims& dims) {
  if (spec.score_scale) return *spec.score_scale;
  return 1.0 / std::sqrt(static_cast<double>(qk_dot_dim(spec, dims)));
}

std::size_t kv_group_count(const ArchSpec& spec, const ModelDims& dims) {
  switch (spec.kind) {
    case ArchKind::kMHA: return dims.n_heads;
    case ArchKind::kGQA: return dims.groups;
    default: return 1;
  }
}

std::size_t kv_group_of(const ArchSpec& spec, const ModelDims& dims, std::size_t head) {
  switch (spec.kind) {
    case ArchKind::kMHA: return head;
    case ArchKind::kGQA: return head / (dims.n_heads / dims.groups);
    default: return 0;
  }
}

bool uses_decoupled_rope(const ArchSpec& spec, const ModelDims& dims) {
  return spec.kind == ArchKind::kMLA && dims.rope_dim > 0;
}

}  // namespace gmha
