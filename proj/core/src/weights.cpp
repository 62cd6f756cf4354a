#include "gmha/weights.hpp"

#include <set>
#include <sstream>

#include "gmha/errors.hpp"

namespace gmha {

std::string indexed(std::string_view base, std::size_t i) {
  std::string s(base);
  s += '.';
  s += std::to_string(i);
  return s;
}

std::vector<WeightSpec> expected_weights(const ArchSpec& spec, const ModelDims& dims) {
  validate(spec, dims);
  const std::size_t h = dims.hidden, n = dims.n_heads, d = dims.head_dim, c = dims.latent;
  std::vector<WeightSpec> out;
  auto add = [&out](std::string name, Shape shape, WeightRole role) {
    out.push_back({std::move(name), std::move(shape), role});
  };

  switch (spec.kind) {
    case ArchKind::kFPBA:
      for (std::size_t ch = 0; ch < h; ++ch) {
        add(indexed("W", ch), {h, h}, WeightRole::kBilinear);
        add(indexed("U", ch), {h, h}, WeightRole::kOutput);
      }
      break;
    case ArchKind::kMHA:
    case ArchKind::kMQA:
    case ArchKind::kGQA: {
      for (std::size_t i = 0; i < n; ++i) {
        add(indexed("Q", i), {h, d}, WeightRole::kQuery);
        add(indexed("O", i), {h, d}, WeightRole::kOutput);
      }
      if (spec.kind == ArchKind::kMQA) {
        add("K", {h, d}, WeightRole::kKey);
        add("V", {h, d}, WeightRole::kValue);
      } else {
        const std::size_t groups = kv_group_count(spec, dims);
        for (std::size_t g = 0; g < groups; ++g) {
          add(indexed("K", g), {h, d}, WeightRole::kKey);
          add(indexed("V", g), {h, d}, WeightRole::kValue);
        }
      }
      break;
    }
    case ArchKind::kMLA:
      add("S_q", {h, c}, WeightRole::kLatent);
      add("S_k", {h, c}, WeightRole::kLatent);
      add("S_v", {h, c}, WeightRole::kLatent);
      for (std::size_t i = 0; i < n; ++i) {
        add(indexed("Q", i), {c, d}, WeightRole::kQuery);
        add(indexed("K", i), {c, d}, WeightRole::kKey);
        add(indexed("V", i), {c, d}, WeightRole::kValue);
        add(indexed("O", i), {h, d}, WeightRole::kOutput);
      }
      if (dims.rope_dim > 0) {
        add("W_kr", {h, dims.rope_dim}, WeightRole::kRope);
        for (std::size_t i = 0; i < n; ++i) add(indexed("Q_r", i), {c, dims.rope_dim}, WeightRole::kRope);
      }
      break;
    case ArchKind::kMFA:
    case ArchKind::kMFAKR: {
      if (spec.factored_q) {
        add("S_q", {h, c}, WeightRole::kLatent);
        for (std::size_t i = 0; i < n; ++i) add(indexed("Q", i), {c, c}, WeightRole::kQuery);
      } else {
        for (std::size_t i = 0; i < n; ++i) add(indexed("W_q", i), {h, c}, WeightRole::kQuery);
      }
      add("S_k", {h, c}, WeightRole::kLatent);
      if (spec.kind == ArchKind::kMFA) add("S_v", {h, c}, WeightRole::kLatent);
      for (std::size_t i = 0; i < n; ++i) add(indexed("O", i), {h, c}, WeightRole::kOutput);
      if (spec.kind == ArchKind::kMFAKR) {
        const KrVariant v = *spec.kr_variant;
        if (v != KrVariant::kVanilla) add("N", {c, c}, WeightRole::kValueMixer);
        if (v == KrVariant::kGated) add("alpha", {c}, WeightRole::kGate);
      }
      break;
    }
  }
  return out;
}

std::vector<std::string> audit_shapes(const ArchSpec& spec, const ModelDims& dims, const AttnWeights& w) {
  std::vector<std::string> violations;
  std::vector<WeightSpec> expected;
  try {
    expected = expected_weights(spec, dims);
  } catch (const ConfigError& e) {
    violations.emplace_back(std::string("configuration: ") + e.what());
    return violations;
  }
  std::set<std::string, std::less<>> known;
  for (const auto& ws : expected) {
    known.insert(ws.name);
    auto it = w.find(ws.name);
    if (it == w.end()) {
      violations.push_back("missing " + ws.name + " (expected " + shape_str(ws.shape) + ")");
    } else if (it->second.shape() != ws.shape) {
      violations.push_back(ws.name + " has shape " + shape_str(it->second.shape()) + ", expected " +
                           shape_str(ws.shape));
    }
  }
  for (const auto& [name, t] : w) {
    if (!known.contains(name)) violations.push_back("unexpected weight " + name + " " + shape_str(t.shape()));
  }
  return violations;
}

void require_valid_weights(const ArchSpec& spec, const ModelDims& dims, const AttnWeights& w) {
  const auto v = audit_shapes(spec, dims, w);
  if (v.empty()) return;
  std::ostringstream os;
  os << arch_label(spec) << " weight audit failed:";
  for (const auto& s : v) os << "\n  " << s;
  throw ConfigError(os.str());
}

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(shape);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

AttnWeights random_attn_weights(const ArchSpec& spec, const ModelDims& dims, std::mt19937_64& rng, double stddev,
                                bool zero_gate) {
  AttnWeights w;
  for (const auto& ws : expected_weights(spec, dims)) {
    if (ws.role == WeightRole::kGate && zero_gate) {
      w.emplace(ws.name, Tensor(ws.shape, 0.0));
    } else {
      w.emplace(ws.name, random_tensor(ws.shape, rng, stddev));
    }
  }
  return w;
}

}  // namespace gmha
