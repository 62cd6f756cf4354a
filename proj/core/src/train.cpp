#include "gmha/train.hpp"

#include <cmath>
#include <numbers>
#include <limits>
#include <random>
#include <utility>

#include "gmha/errors.hpp"
#include "gmha/graph.hpp"
#include "gmha/ops.hpp"

namespace gmha {

void validate(const TrainConfig& cfg) {
  validate(cfg.arch, cfg.dims);
  if (cfg.total_steps == 0) throw ConfigError("train: total_steps must be positive");
  if (cfg.warmup_steps >= cfg.total_steps) throw ConfigError("train: warmup_steps must be below total_steps");
  if (!(cfg.peak_lr > 0) || !(cfg.final_lr > 0)) throw ConfigError("train: learning rates must be positive");
  if (cfg.final_lr > cfg.peak_lr) throw ConfigError("train: final_lr exceeds peak_lr");
  if (!(cfg.weight_decay >= 0)) throw ConfigError("train: weight_decay must be non-negative");
  if (!(cfg.grad_clip_norm > 0)) throw ConfigError("train: grad_clip_norm must be positive");
  if (!(cfg.adam_beta1 > 0 && cfg.adam_beta1 < 1) || !(cfg.adam_beta2 > 0 && cfg.adam_beta2 < 1)) {
    throw ConfigError("train: adam betas must lie in (0, 1)");
  }
  if (!(cfg.adam_eps > 0)) throw ConfigError("train: adam_eps must be positive");
  if (!(cfg.init_std > 0)) throw ConfigError("train: init_std must be positive");
  if (cfg.seq_len == 0 || cfg.batch_tokens < cfg.seq_len) {
    throw ConfigError("train: batch_tokens must hold at least one sequence of seq_len");
  }
  if (cfg.dims.vocab < 256) throw ConfigError("train: byte-level training needs vocab >= 256");
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
  if (step > cfg.total_steps) {
    throw RangeError("lr_at: step " + std::to_string(step) + " beyond total_steps " + std::to_string(cfg.total_steps));
  }
  if (step < cfg.warmup_steps) {
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  if (step == cfg.total_steps) return cfg.final_lr;
  const double progress = static_cast<double>(step - cfg.warmup_steps) /
                          static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.final_lr + 0.5 * (cfg.peak_lr - cfg.final_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

double adamw_step(TensorMap& params, AdamState& state, double lr, const TrainConfig& cfg) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw NumericError("adamw: non-finite gradient in " + name);
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  const double clip = norm > cfg.grad_clip_norm ? cfg.grad_clip_norm / norm : 1.0;

  state.t += 1;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    if (m.size() != p.size()) throw DimensionError("adamw: state size mismatch for " + name);
    const bool decay = decays(name);
    auto data = p.data();
    std::span<const double> grad;
    if (p.has_grad()) grad = std::as_const(p).grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i] * clip;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      double update = mhat / (std::sqrt(vhat) + cfg.adam_eps);
      if (decay) update += cfg.weight_decay * data[i];
      data[i] -= lr * update;
    }
  }
  return norm;
}

std::string to_string(StepStatus s) { return s == StepStatus::kOk ? "ok" : "diverged"; }

double sequence_loss(const ToyLM& model, std::span<const int> tokens) {
  if (tokens.size() < 2) throw DimensionError("sequence_loss: need at least two tokens");
  const Tensor logits = forward_logits(model, tokens.first(tokens.size() - 1));
  return ops::cross_entropy(logits, tokens.subspan(1));
}

TrainResult train_loop(const TrainConfig& cfg, std::span<const std::uint8_t> corpus, const MetricsCallback& on_step) {
  validate(cfg);
  ToyLM model = make_model(cfg.arch, cfg.dims);
  init_weights(model, cfg.seed, cfg.init_std);
  return train_loop(cfg, std::move(model), corpus, on_step);
}

TrainResult train_loop(const TrainConfig& cfg, ToyLM model, std::span<const std::uint8_t> corpus,
                       const MetricsCallback& on_step) {
  validate(cfg);
  if (corpus.size() < cfg.batch_tokens || corpus.size() < cfg.seq_len + 1) {
    throw ConfigError("train: corpus shorter than one batch (" + std::to_string(corpus.size()) + " bytes)");
  }
  const std::size_t batch = cfg.batch_tokens / cfg.seq_len;
  const std::size_t window = cfg.seq_len + 1;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_int_distribution<std::size_t> offset(0, corpus.size() - window);

  TrainResult result{std::move(model), {}, false};
  for (auto& [name, p] : result.model.params) p.set_requires_grad(true);
  AdamState state;
  std::vector<int> tokens(window);
  double first_loss = 0.0;

  for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
    for (auto& [name, p] : result.model.params) p.zero_grad();
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t start = offset(rng);
      for (std::size_t i = 0; i < window; ++i) tokens[i] = corpus[start + i];
      const std::span<const int> seq(tokens);
      Graph g;
      const Var logits = model_logits(g, result.model, seq.first(cfg.seq_len));
      const Var ce = g.cross_entropy(logits, seq.subspan(1));
      loss += g.value(ce)[0] / static_cast<double>(batch);
      g.backward(g.scale(ce, 1.0 / static_cast<double>(batch)));
    }

    StepMetrics metrics{step, loss, lr_at(step, cfg), 0.0, StepStatus::kOk};
    if (step == 1) first_loss = loss;
    bool diverged = !std::isfinite(loss) || loss > 10.0 * first_loss;
    if (!diverged) {
      try {
        metrics.grad_norm = adamw_step(result.model.params, state, metrics.lr, cfg);
      } catch (const NumericError&) {
        metrics.grad_norm = std::numeric_limits<double>::quiet_NaN();
        diverged = true;
      }
    }
    if (diverged) metrics.status = StepStatus::kDiverged;
    result.metrics.push_back(metrics);
    if (on_step) on_step(metrics);
    if (diverged) {
      result.diverged = true;
      break;
    }
  }
  for (auto& [name, p] : result.model.params) {
    p.clear_grad();
    p.set_requires_grad(false);
  }
  return result;
}

}  // namespace gmha
