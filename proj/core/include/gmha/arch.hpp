#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace gmha {

enum class ArchKind { kFPBA, kMHA, kMQA, kGQA, kMLA, kMFA, kMFAKR };

// Value path used by MFA-KR, in order of the design ladder.
enum class KrVariant { kVanilla, kExtraProj, kResidual, kGated };

enum class PosEmbedKind { kNone, kRope, kAlibi };

struct PosEmbed {
  PosEmbedKind kind = PosEmbedKind::kNone;
  double rope_base = 500000.0;

  static PosEmbed none() { return {}; }
  static PosEmbed rope(double base = 500000.0) { return {PosEmbedKind::kRope, base}; }
  static PosEmbed alibi() { return {PosEmbedKind::kAlibi, 500000.0}; }
};

struct ArchSpec {
  ArchKind kind = ArchKind::kMHA;
  std::optional<KrVariant> kr_variant;  // set iff kind == kMFAKR
  bool factored_q = true;               // MFA / MFA-KR only
  PosEmbed pos_embed;
  std::optional<double> score_scale;

  static ArchSpec of(ArchKind kind, PosEmbed pos = {});
  static ArchSpec mfa_kr(KrVariant variant, PosEmbed pos = {});
};

/// Architecture hyperparameters. Fields that an architecture does not use
/// are ignored by it (e.g. latent for MHA, groups for anything but GQA).
struct ModelDims {
  std::size_t hidden = 0;     // H
  std::size_t layers = 1;     // L
  std::size_t n_heads = 1;    // n (MHA family) or m (MLA / MFA)
  std::size_t head_dim = 0;   // d; equals latent for MFA
  std::size_t latent = 0;     // C
  std::size_t groups = 1;     // g (GQA)
  std::size_t rope_dim = 0;   // d_r (MLA decoupled rotary key)
  std::size_t vocab = 256;    // V
  std::size_t ffn = 0;        // F
};

std::string_view to_string(ArchKind kind);
std::string_view to_string(KrVariant variant);
std::string_view to_string(PosEmbedKind kind);
// Short label: "mha", "mfa-kr", "mfa-kr(gated)" etc.
std::string arch_label(const ArchSpec& spec);

ArchKind parse_arch_kind(std::string_view s);
KrVariant parse_kr_variant(std::string_view s);
PosEmbedKind parse_pos_embed(std::string_view s);

// Throws ConfigError describing the first inconsistency.
void validate(const ArchSpec& spec, const ModelDims& dims);

// Number of attention heads; FPBA has one per hidden channel.
std::size_t head_count(const ArchSpec& spec, const ModelDims& dims);
// Width of the per-head query·key dot product.
std::size_t qk_dot_dim(const ArchSpec& spec, const ModelDims& dims);
// score_scale if set, else 1/sqrt(qk_dot_dim).
double score_scale(const ArchSpec& spec, const ModelDims& dims);

// Index of the shared key/value group serving a head (MHA: itself, MQA: 0).
std::size_t kv_group_of(const ArchSpec& spec, const ModelDims& dims, std::size_t head);
std::size_t kv_group_count(const ArchSpec& spec, const ModelDims& dims);

bool uses_decoupled_rope(const ArchSpec& spec, const ModelDims& dims);

}  // namespace gmha
