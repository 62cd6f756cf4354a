#include "gmha/cli/config.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gmha/errors.hpp"

namespace gmha::cli {

using nlohmann::json;

namespace {

constexpr std::size_t kSeqLen = 16384;

RunConfig make(std::string name, ArchSpec arch, ModelDims dims, double lr, std::size_t steps, std::size_t batch) {
  RunConfig c;
  c.name = std::move(name);
  c.train.arch = arch;
  c.train.arch.pos_embed = PosEmbed::rope();
  c.train.dims = dims;
  c.train.peak_lr = lr;
  c.train.total_steps = steps;
  c.train.warmup_steps = 2000;
  c.train.seq_len = kSeqLen;
  c.train.batch_tokens = batch;
  return c;
}

ModelDims mha_family(std::size_t layers, std::size_t ffn, std::size_t groups = 1) {
  ModelDims d;
  d.hidden = 2048;
  d.layers = layers;
  d.n_heads = 16;
  d.head_dim = 128;
  d.groups = groups;
  d.vocab = 65536;
  d.ffn = ffn;
  return d;
}

ModelDims mfa_dims(std::size_t layers, std::size_t heads, std::size_t ffn) {
  ModelDims d;
  d.hidden = 2048;
  d.layers = layers;
  d.n_heads = heads;
  d.head_dim = 256;
  d.latent = 256;
  d.vocab = 65536;
  d.ffn = ffn;
  return d;
}

const std::vector<RunConfig>& presets() {
  static const std::vector<RunConfig> all = [] {
    // 7B rows: 7.34M-token batches, 140K steps; 1B ablation rows: 0.41M, 50K.
    const double lr7 = 8.4e-4, lr1 = 9.63e-4;
    const std::size_t s7 = 140000, s1 = 50000;
    const std::size_t b7 = 448 * kSeqLen, b1 = 25 * kSeqLen;
    ModelDims mla = mha_family(20, 6504);
    mla.latent = 512;
    mla.rope_dim = 64;
    std::vector<RunConfig> v;
    v.push_back(make("7b-mha", ArchSpec::of(ArchKind::kMHA), mha_family(24, 2624), lr7, s7, b7));
    v.push_back(make("7b-mfa", ArchSpec::of(ArchKind::kMFA), mfa_dims(24, 18, 3008), lr7, s7, b7));
    v.push_back(make("7b-mfa-kr", ArchSpec::mfa_kr(KrVariant::kGated), mfa_dims(24, 18, 3016), lr7, s7, b7));
    v.push_back(make("1b-mha", ArchSpec::of(ArchKind::kMHA), mha_family(20, 6008), lr1, s1, b1));
    v.push_back(make("1b-gqa8", ArchSpec::of(ArchKind::kGQA), mha_family(20, 6680, 8), lr1, s1, b1));
    v.push_back(make("1b-gqa4", ArchSpec::of(ArchKind::kGQA), mha_family(20, 7032, 4), lr1, s1, b1));
    v.push_back(make("1b-gqa2", ArchSpec::of(ArchKind::kGQA), mha_family(20, 7200, 2), lr1, s1, b1));
    v.push_back(make("1b-mqa", ArchSpec::of(ArchKind::kMQA), mha_family(20, 7304), lr1, s1, b1));
    v.push_back(make("1b-mla", ArchSpec::of(ArchKind::kMLA), mla, lr1, s1, b1));
    v.push_back(make("1b-mfa", ArchSpec::of(ArchKind::kMFA), mfa_dims(20, 14, 7168), lr1, s1, b1));
    v.push_back(make("1b-mfa-kr", ArchSpec::mfa_kr(KrVariant::kGated), mfa_dims(20, 14, 7232), lr1, s1, b1));
    return v;
  }();
  return all;
}

// Strict object reader: every key must be consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: " + path_ + " must be an object");
  }

  void done() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("config: unknown key '" + path_ + "." + key + "'");
    }
  }

  const json* get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (const json* v = get(key)) {
      try {
        out = v->get<T>();
      } catch (const json::exception& e) {
        throw ConfigError("config: " + path_ + "." + key + ": " + e.what());
      }
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_arch(const json& j, ArchSpec& arch) {
  Section s(j, "arch");
  std::string text;
  s.read("kind", text);
  if (!text.empty()) {
    arch.kind = parse_arch_kind(text);
    if (arch.kind != ArchKind::kMFAKR) arch.kr_variant.reset();
    else if (!arch.kr_variant) arch.kr_variant = KrVariant::kGated;
  }
  text.clear();
  s.read("kr_variant", text);
  if (!text.empty()) arch.kr_variant = parse_kr_variant(text);
  s.read("factored_q", arch.factored_q);
  text.clear();
  s.read("pos_embed", text);
  if (!text.empty()) arch.pos_embed.kind = parse_pos_embed(text);
  s.read("rope_base", arch.pos_embed.rope_base);
  if (const json* v = s.get("score_scale")) {
    if (v->is_null()) arch.score_scale.reset();
    else if (v->is_number()) arch.score_scale = v->get<double>();
    else throw ConfigError("config: arch.score_scale must be a number or null");
  }
  s.done();
}

void read_dims(const json& j, ModelDims& d) {
  Section s(j, "dims");
  s.read("hidden", d.hidden);
  s.read("layers", d.layers);
  s.read("n_heads", d.n_heads);
  s.read("head_dim", d.head_dim);
  s.read("latent", d.latent);
  s.read("groups", d.groups);
  s.read("rope_dim", d.rope_dim);
  s.read("vocab", d.vocab);
  s.read("ffn", d.ffn);
  s.done();
}

void read_train(const json& j, TrainConfig& t) {
  Section s(j, "train");
  s.read("peak_lr", t.peak_lr);
  s.read("warmup_steps", t.warmup_steps);
  s.read("total_steps", t.total_steps);
  s.read("final_lr", t.final_lr);
  s.read("batch_tokens", t.batch_tokens);
  s.read("seq_len", t.seq_len);
  s.read("weight_decay", t.weight_decay);
  s.read("grad_clip_norm", t.grad_clip_norm);
  s.read("adam_beta1", t.adam_beta1);
  s.read("adam_beta2", t.adam_beta2);
  s.read("adam_eps", t.adam_eps);
  s.read("seed", t.seed);
  s.read("init_std", t.init_std);
  s.done();
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& p : presets()) n.push_back(p.name);
    return n;
  }();
  return names;
}

std::optional<RunConfig> find_preset(std::string_view name) {
  for (const auto& p : presets()) {
    if (p.name == name) return p;
  }
  return std::nullopt;
}

RunConfig preset(std::string_view name) {
  if (auto p = find_preset(name)) return *p;
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

std::vector<std::string> expand_preset_selector(std::string_view selector) {
  if (selector == "all") return preset_names();
  if (selector == "7b" || selector == "1b") {
    std::vector<std::string> out;
    const std::string prefix = std::string(selector) + "-";
    for (const auto& n : preset_names()) {
      if (n.rfind(prefix, 0) == 0) out.push_back(n);
    }
    return out;
  }
  return {preset(selector).name};
}

RunConfig parse_run_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  {
    Section top(j, "config");
    std::string base;
    top.read("preset", base);
    if (!base.empty()) cfg = preset(base);
    top.read("name", cfg.name);
    if (const json* a = top.get("arch")) read_arch(*a, cfg.train.arch);
    if (const json* d = top.get("dims")) read_dims(*d, cfg.train.dims);
    if (const json* t = top.get("train")) read_train(*t, cfg.train);
    top.done();
  }
  if (cfg.name.empty()) cfg.name = arch_label(cfg.train.arch);
  validate(cfg.train.arch, cfg.train.dims);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string to_json(const RunConfig& cfg) {
  const auto& a = cfg.train.arch;
  const auto& d = cfg.train.dims;
  const auto& t = cfg.train;
  json arch = {{"kind", std::string(to_string(a.kind))},
               {"factored_q", a.factored_q},
               {"pos_embed", std::string(to_string(a.pos_embed.kind))},
               {"rope_base", a.pos_embed.rope_base},
               {"score_scale", a.score_scale ? json(*a.score_scale) : json(nullptr)}};
  if (a.kr_variant) arch["kr_variant"] = std::string(to_string(*a.kr_variant));
  json j = {
      {"name", cfg.name},
      {"arch", arch},
      {"dims",
       {{"hidden", d.hidden}, {"layers", d.layers}, {"n_heads", d.n_heads}, {"head_dim", d.head_dim},
        {"latent", d.latent}, {"groups", d.groups}, {"rope_dim", d.rope_dim}, {"vocab", d.vocab}, {"ffn", d.ffn}}},
      {"train",
       {{"peak_lr", t.peak_lr}, {"warmup_steps", t.warmup_steps}, {"total_steps", t.total_steps},
        {"final_lr", t.final_lr}, {"batch_tokens", t.batch_tokens}, {"seq_len", t.seq_len},
        {"weight_decay", t.weight_decay}, {"grad_clip_norm", t.grad_clip_norm}, {"adam_beta1", t.adam_beta1},
        {"adam_beta2", t.adam_beta2}, {"adam_eps", t.adam_eps}, {"seed", t.seed}, {"init_std", t.init_std}}}};
  return j.dump(2);
}

RunConfig shrink(const RunConfig& cfg, std::size_t factor) {
  if (factor == 0) throw ConfigError("shrink: factor must be positive");
  RunConfig out = cfg;
  auto& d = out.train.dims;
  auto div = [&](std::size_t& v, const char* what) {
    if (v % factor != 0) {
      throw ConfigError("shrink: " + std::string(what) + "=" + std::to_string(v) + " not divisible by " +
                        std::to_string(factor));
    }
    v /= factor;
  };
  div(d.hidden, "hidden");
  div(d.head_dim, "head_dim");
  div(d.latent, "latent");
  div(d.rope_dim, "rope_dim");
  d.ffn = std::max<std::size_t>(1, d.ffn / factor);
  d.vocab = 256;
  if (factor != 1) out.name += "/" + std::to_string(factor);
  validate(out.train.arch, d);
  return out;
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("GMHA_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long s = std::strtoull(v, &end, 10);
  if (end == nullptr || *end != '\0') throw ConfigError("GMHA_SEED is not an unsigned integer: " + std::string(v));
  return s;
}

}  // namespace gmha::cli
