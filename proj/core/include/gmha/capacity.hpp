#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "gmha/arch.hpp"

namespace gmha {

/// One row of the capacity comparison realised for a concrete configuration.
struct CapacityReport {
  ArchSpec arch;
  std::string label;
  std::size_t kv_bytes_per_token = 0;
  std::size_t param_count_formula = 0;
  std::optional<std::size_t> param_count_measured;
  std::size_t heads = 0;
  std::size_t frh = 0;   // factorization rank per head
  std::size_t slsd = 0;  // shared latent subspace dimension
  std::size_t ter = 0;   // total effective rank = heads * frh
  bool impractical = false;  // FPBA: reportable, not deployable
};

/// Closed-form attention parameter count per layer:
///   FPBA 2H³, MHA 4H², MQA (2+2/n)H², GQA (2+2g/n)H²,
///   MLA H(3C+d_r+md)+mC(3d+d_r), MFA H(3C+mC)+mC².
/// MFA-KR drops S_v (−HC) and adds N (C²) and alpha (C) as its variant uses
/// them; an unfactored query path swaps S_q and the Q_c mixers for mHC.
std::size_t param_count_formula(const ArchSpec& spec, const ModelDims& dims);

/// Enumerates the attention weight shapes of one layer and sums their sizes.
std::size_t count_params(const ArchSpec& spec, const ModelDims& dims);

CapacityReport capacity_report(const ArchSpec& spec, const ModelDims& dims, std::size_t elem_bytes = 2);

}  // namespace gmha
