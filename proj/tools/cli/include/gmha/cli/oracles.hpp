#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gmha/arch.hpp"

namespace gmha::cli {

enum class OracleStatus { kPass, kFail, kUnsupported, kNotApplicable };
std::string to_string(OracleStatus s);  // "pass", "fail", "unsupported-combination", "not-applicable"

struct OracleResult {
  std::string arch;
  std::string oracle;
  OracleStatus status = OracleStatus::kPass;
  std::size_t trials = 0;
  double max_deviation = 0.0;
  double tolerance = 0.0;
};

struct EquivOptions {
  std::vector<ArchSpec> archs;
  std::size_t trials = 20;
  std::uint64_t seed = 0;
  PosEmbedKind pos_embed = PosEmbedKind::kNone;
  double tolerance = 1e-8;       // output deviations
  double rank_tolerance = 1e-10;  // sigma_{FRH+1} / sigma_max
};

// The seven architectures with MFA-KR in its gated form.
std::vector<ArchSpec> default_archs();

/// Small random dimensions (T ≤ 8 tokens, H ≤ 16) valid for spec.
ModelDims random_oracle_dims(const ArchSpec& spec, std::mt19937_64& rng);

/// Runs dual_formulation, grouped_fpba, incremental_decode, degeneration and
/// rank_bound for every arch. Oracles that cannot apply report
/// not-applicable; factored forms under RoPE report unsupported-combination.
std::vector<OracleResult> run_equiv(const EquivOptions& opts);

bool all_passed(const std::vector<OracleResult>& results);

// Dimensions used by the full-model gradient check: H = 16, L = 2.
ModelDims gradcheck_dims(ArchKind kind);

}  // namespace gmha::cli
