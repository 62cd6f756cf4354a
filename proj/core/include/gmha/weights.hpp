#pragma once

#include <random>
#include <string>
#include <vector>

#include "gmha/arch.hpp"
#include "gmha/tensor.hpp"

namespace gmha {

// Attention weights keyed by name, e.g. "S_q", "Q.3", "K", "alpha".
using AttnWeights = TensorMap;

enum class WeightRole {
  kQuery,
  kKey,
  kValue,
  kOutput,      // output projection; depth-scaled at init
  kLatent,      // shared down-projection S_q / S_k / S_v
  kRope,        // decoupled rotary projections
  kValueMixer,  // MFA-KR N
  kGate,        // MFA-KR alpha; zero-initialised, never weight-decayed
  kBilinear,    // FPBA W_c / U_c
};

struct WeightSpec {
  std::string name;
  Shape shape;
  WeightRole role;
};

/// The complete weight set of one attention layer. Shapes are a function of
/// (spec, dims) only.
std::vector<WeightSpec> expected_weights(const ArchSpec& spec, const ModelDims& dims);

/// Every violation in w (missing, mis-shaped, unexpected names); empty means ok.
std::vector<std::string> audit_shapes(const ArchSpec& spec, const ModelDims& dims, const AttnWeights& w);

// Throws ConfigError listing all violations.
void require_valid_weights(const ArchSpec& spec, const ModelDims& dims, const AttnWeights& w);

/// Gaussian weights for oracles and tests. The gate vector is drawn too
/// unless zero_gate is set.
AttnWeights random_attn_weights(const ArchSpec& spec, const ModelDims& dims, std::mt19937_64& rng,
                                double stddev = 0.3, bool zero_gate = false);

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double stddev = 1.0);

std::string indexed(std::string_view base, std::size_t i);

}  // namespace gmha
