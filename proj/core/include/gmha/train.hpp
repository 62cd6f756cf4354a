#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gmha/arch.hpp"
#include "gmha/model.hpp"

namespace gmha {

struct TrainConfig {
  ArchSpec arch;
  ModelDims dims;
  double peak_lr = 9.63e-4;
  std::size_t warmup_steps = 2000;
  std::size_t total_steps = 50000;
  double final_lr = 1e-5;
  std::size_t batch_tokens = 8192;
  std::size_t seq_len = 256;
  double weight_decay = 0.1;
  double grad_clip_norm = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.95;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double init_std = kInitStd;
};

// Throws ConfigError on an inconsistent config (also validates arch/dims).
void validate(const TrainConfig& cfg);

/// Linear warmup from 0 to peak, then cosine decay to final_lr at total_steps.
double lr_at(std::size_t step, const TrainConfig& cfg);

struct AdamState {
  std::size_t t = 0;
  std::map<std::string, std::vector<double>, std::less<>> m;
  std::map<std::string, std::vector<double>, std::less<>> v;
};

/// One AdamW update using the grad buffers held by each parameter (a missing
/// buffer counts as zero). Clips to the global norm first. Returns the global
/// gradient norm before clipping. Non-finite gradients throw NumericError and
/// leave params and state untouched.
double adamw_step(TensorMap& params, AdamState& state, double lr, const TrainConfig& cfg);

enum class StepStatus { kOk, kDiverged };
std::string to_string(StepStatus s);

struct StepMetrics {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  StepStatus status = StepStatus::kOk;
};

struct TrainResult {
  ToyLM model;
  std::vector<StepMetrics> metrics;
  bool diverged = false;
};

using MetricsCallback = std::function<void(const StepMetrics&)>;

/// Mean next-byte cross-entropy of the model over each sequence.
double sequence_loss(const ToyLM& model, std::span<const int> tokens);

/// Byte-level next-token training. Each step draws batch_tokens / seq_len
/// windows of seq_len + 1 bytes at seeded random offsets. Halts and flags the
/// step as diverged when the loss is non-finite, exceeds 10x the first-step
/// loss, or the gradients are non-finite.
TrainResult train_loop(const TrainConfig& cfg, std::span<const std::uint8_t> corpus,
                       const MetricsCallback& on_step = {});

// Same loop, continuing from an existing model.
TrainResult train_loop(const TrainConfig& cfg, ToyLM model, std::span<const std::uint8_t> corpus,
                       const MetricsCallback& on_step = {});

}  // namespace gmha
