#include "gmha/cli/commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <iterator>
#include <random>
#include <sstream>

#include "gmha/capacity.hpp"
#include "gmha/cli/checkpoint.hpp"
#include "gmha/cli/oracles.hpp"
#include "gmha/errors.hpp"
#include "gmha/gradcheck.hpp"
#include "gmha/kvcache.hpp"
#include "gmha/model.hpp"
#include "gmha/train.hpp"

namespace gmha::cli {

using json = nlohmann::ordered_json;

namespace {

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    parts.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::size_t to_size(const std::string& s) {
  std::size_t pos = 0;
  const unsigned long long v = std::stoull(s, &pos);
  if (pos != s.size()) throw ConfigError("not an integer: " + s);
  return static_cast<std::size_t>(v);
}

std::vector<RunConfig> select_configs(const std::string& config_path, const std::string& selector) {
  if (!config_path.empty()) return {load_run_config(config_path)};
  std::vector<RunConfig> out;
  for (const auto& name : expand_preset_selector(selector)) out.push_back(preset(name));
  return out;
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint64_t resolve_seed(std::uint64_t config_seed, const CLI::Option* flag, std::uint64_t flag_value) {
  if (flag != nullptr && flag->count() > 0) return flag_value;
  if (auto s = env_seed()) return *s;
  return config_seed;
}

std::string escape_bytes(const std::vector<int>& bytes) {
  std::string s;
  for (int b : bytes) {
    if (b >= 0x20 && b < 0x7f && b != '\\' && b != '"') {
      s.push_back(static_cast<char>(b));
    } else {
      static const char* hex = "0123456789abcdef";
      s += "\\x";
      s.push_back(hex[(b >> 4) & 0xf]);
      s.push_back(hex[b & 0xf]);
    }
  }
  return s;
}

int argmax(const Tensor& logits) {
  const auto row = logits.row(0);
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

// ---- report ----------------------------------------------------------------

int cmd_report(const std::string& config, const std::string& selector, std::size_t elem_bytes,
               const std::string& format, std::ostream& out) {
  if (elem_bytes == 0) throw ConfigError("--elem-bytes must be positive");
  std::vector<ReportRow> rows;
  for (const auto& cfg : select_configs(config, selector)) rows.push_back(report_row(cfg, elem_bytes));
  out << (format == "json" ? report_json(rows) + "\n" : report_csv(rows));
  return kExitOk;
}

// ---- equiv -----------------------------------------------------------------

int cmd_equiv(const std::string& arch, const std::string& kr_variant, std::size_t trials, std::uint64_t seed,
              const std::string& pos, std::ostream& out) {
  EquivOptions opts;
  opts.trials = trials;
  opts.seed = seed;
  opts.pos_embed = parse_pos_embed(pos);
  if (arch == "all") {
    opts.archs = default_archs();
  } else {
    const ArchKind kind = parse_arch_kind(arch);
    opts.archs = {kind == ArchKind::kMFAKR ? ArchSpec::mfa_kr(parse_kr_variant(kr_variant)) : ArchSpec::of(kind)};
  }
  const auto results = run_equiv(opts);
  json rows = json::array();
  for (const auto& r : results) {
    rows.push_back({{"arch", r.arch},
                    {"oracle", r.oracle},
                    {"status", to_string(r.status)},
                    {"trials", r.trials},
                    {"max_deviation", r.max_deviation},
                    {"tolerance", r.tolerance}});
  }
  const bool ok = all_passed(results);
  out << json{{"seed", seed}, {"trials", trials}, {"pos_embed", pos}, {"results", rows}, {"pass", ok}}.dump(2)
      << "\n";
  return ok ? kExitOk : kExitOracleFailure;
}

// ---- gradcheck -------------------------------------------------------------

int cmd_gradcheck(const std::string& arch, const std::string& kr_variant, const std::string& pos,
                  std::uint64_t seed, std::ostream& out) {
  const ArchKind kind = parse_arch_kind(arch);
  ArchSpec spec = kind == ArchKind::kMFAKR ? ArchSpec::mfa_kr(parse_kr_variant(kr_variant)) : ArchSpec::of(kind);
  spec.pos_embed.kind = parse_pos_embed(pos);
  const ModelDims dims = gradcheck_dims(kind);

  ToyLM model = make_model(spec, dims);
  init_weights(model, seed, kGradcheckInitStd);
  for (auto& [name, t] : model.params) {
    if (name.size() >= 6 && name.substr(name.size() - 6) == ".alpha") {
      t = truncated_normal(t.shape(), kGradcheckInitStd, seed, name);
    }
  }
  std::mt19937_64 rng(seed);
  std::vector<int> tokens(7);
  for (auto& tok : tokens) tok = static_cast<int>(rng() % dims.vocab);
  const std::span<const int> seq(tokens);

  const GradcheckResult r = finite_diff_gradcheck(
      [&](Graph& g, TensorMap&) {
        return g.cross_entropy(model_logits(g, model, seq.first(seq.size() - 1)), seq.subspan(1));
      },
      model.params);
  const bool ok = r.max_rel_error <= 1e-4;
  out << json{{"arch", arch_label(spec)},
              {"pos_embed", pos},
              {"max_rel_error", r.max_rel_error},
              {"worst_param", r.worst_param},
              {"worst_index", r.worst_index},
              {"entries_checked", r.entries_checked},
              {"pass", ok}}
             .dump()
      << "\n";
  return ok ? kExitOk : kExitOracleFailure;
}

// ---- train -----------------------------------------------------------------

int cmd_train(const std::string& config, const std::string& preset_name, std::size_t shrink_factor,
              const std::string& corpus_path, const std::string& out_path, std::size_t steps,
              const CLI::Option* seed_flag, std::uint64_t seed_value, std::ostream& out) {
  if (config.empty() == preset_name.empty()) throw ConfigError("train: give exactly one of --config or --preset");
  RunConfig cfg = config.empty() ? preset(preset_name) : load_run_config(config);
  if (shrink_factor > 1) cfg = shrink(cfg, shrink_factor);
  if (steps > 0) {
    cfg.train.total_steps = steps;
    cfg.train.warmup_steps = std::min(cfg.train.warmup_steps, steps - 1);
  }
  cfg.train.seed = resolve_seed(cfg.train.seed, seed_flag, seed_value);
  const auto corpus = read_bytes(corpus_path);

  const TrainResult result = train_loop(cfg.train, corpus, [&](const StepMetrics& m) {
    out << json{{"step", m.step}, {"loss", m.loss}, {"lr", m.lr}, {"grad_norm", m.grad_norm},
                {"status", to_string(m.status)}}
               .dump()
        << "\n";
  });
  if (result.diverged) return kExitDiverged;
  if (!out_path.empty()) {
    save_checkpoint(out_path, Checkpoint{result.model, result.metrics.size(), cfg.train.seed});
  }
  return kExitOk;
}

// ---- decode ----------------------------------------------------------------

int cmd_decode(const std::string& ckpt_path, const std::string& preset_name, std::size_t shrink_factor,
               const std::string& prompt, std::size_t steps, std::size_t elem_bytes, const CLI::Option* seed_flag,
               std::uint64_t seed_value, std::ostream& out) {
  if (ckpt_path.empty() == preset_name.empty()) throw ConfigError("decode: give exactly one of --ckpt or --preset");
  if (elem_bytes == 0) throw ConfigError("--elem-bytes must be positive");
  ToyLM model;
  if (!ckpt_path.empty()) {
    model = load_checkpoint(ckpt_path).model;
  } else {
    const RunConfig cfg = shrink(preset(preset_name), shrink_factor);
    model = make_model(cfg.arch(), cfg.dims());
    init_weights(model, resolve_seed(cfg.train.seed, seed_flag, seed_value), cfg.train.init_std);
  }
  std::vector<int> feed(prompt.begin(), prompt.end());
  for (auto& b : feed) b = static_cast<unsigned char>(b);
  if (feed.empty()) feed.push_back(0);
  if (steps < feed.size()) throw ConfigError("decode: --steps must cover the prompt length");
  for (int b : feed) {
    if (static_cast<std::size_t>(b) >= model.dims.vocab) throw ConfigError("decode: prompt byte outside vocabulary");
  }

  DecodeSession session(model, elem_bytes);
  std::vector<int> generated;
  Tensor logits;
  for (std::size_t s = 0; s < steps; ++s) {
    const int tok = s < feed.size() ? feed[s] : generated.back();
    logits = session.feed(tok);
    if (s + 1 >= feed.size()) generated.push_back(argmax(logits));
  }
  const std::size_t predicted = session.position() * cache_bytes_per_token(model.arch, model.dims, elem_bytes);
  const std::size_t measured = session.cache().measured_bytes();
  const bool match = predicted == measured;
  out << "arch: " << arch_label(model.arch) << "\n"
      << "generated: \"" << escape_bytes(generated) << "\"\n"
      << "tokens_cached: " << session.cache().tokens() << "\n"
      << "bytes_per_token: " << cache_bytes_per_token(model.arch, model.dims, elem_bytes) << "\n"
      << "measured_bytes: " << measured << "\n"
      << "predicted_bytes: " << predicted << "\n"
      << "predicted==measured: " << (match ? "true" : "false") << "\n";
  return match ? kExitOk : kExitOracleFailure;
}

}  // namespace

ReportRow report_row(const RunConfig& cfg, std::size_t elem_bytes) {
  const CapacityReport r = capacity_report(cfg.arch(), cfg.dims(), elem_bytes);
  ReportRow row;
  row.arch = cfg.name.empty() ? r.label : cfg.name;
  row.kv_bytes_per_token = r.kv_bytes_per_token;
  row.attn_params = r.param_count_formula;
  row.model_params = (cfg.dims().vocab > 0 && cfg.dims().ffn > 0) ? model_param_count(cfg.arch(), cfg.dims()) : 0;
  row.heads = r.heads;
  row.frh = r.frh;
  row.slsd = r.slsd;
  row.ter = r.ter;
  return row;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << kReportColumns << "\n";
  for (const auto& r : rows) {
    if (r.arch.find_first_of(",\"\n") != std::string::npos) throw ConfigError("report: arch name needs quoting");
    os << r.arch << ',' << r.kv_bytes_per_token << ',' << r.attn_params << ',' << r.model_params << ','
       << r.heads << ',' << r.frh << ',' << r.slsd << ',' << r.ter << "\n";
  }
  return os.str();
}

std::string report_json(const std::vector<ReportRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    arr.push_back({{"arch", r.arch},
                   {"kv_bytes_per_token", r.kv_bytes_per_token},
                   {"attn_params", r.attn_params},
                   {"model_params", r.model_params},
                   {"heads", r.heads},
                   {"frh", r.frh},
                   {"slsd", r.slsd},
                   {"ter", r.ter}});
  }
  return arr.dump(2);
}

std::vector<ReportRow> parse_report_csv(std::string_view text) {
  std::vector<ReportRow> rows;
  auto lines = split(text, '\n');
  if (lines.empty() || lines.front() != kReportColumns) throw ConfigError("report csv: bad header");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 8) throw ConfigError("report csv: line " + std::to_string(i + 1) + " has wrong field count");
    rows.push_back({f[0], to_size(f[1]), to_size(f[2]), to_size(f[3]), to_size(f[4]), to_size(f[5]), to_size(f[6]),
                    to_size(f[7])});
  }
  return rows;
}

std::vector<ReportRow> parse_report_json(std::string_view text) {
  std::vector<ReportRow> rows;
  try {
    for (const auto& j : json::parse(text)) {
      rows.push_back({j.at("arch").get<std::string>(), j.at("kv_bytes_per_token").get<std::size_t>(),
                      j.at("attn_params").get<std::size_t>(), j.at("model_params").get<std::size_t>(),
                      j.at("heads").get<std::size_t>(), j.at("frh").get<std::size_t>(),
                      j.at("slsd").get<std::size_t>(), j.at("ter").get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("report json: ") + e.what());
  }
  return rows;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Generalized multi-head attention toolkit", "gmha"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  std::string config, selector = "all", format = "csv", arch = "all", kr_variant = "gated", pos = "none";
  std::string corpus, out_path, ckpt, preset_name, prompt = "a";
  std::size_t elem_bytes = kDefaultElemBytes, trials = 20, steps = 0, decode_steps = 10, shrink_factor = 1;
  std::uint64_t seed = 0;

  auto* report = app.add_subcommand("report", "Cache, parameter and rank accounting per architecture");
  report->add_option("--config", config, "JSON run config");
  report->add_option("--preset", selector, "Preset name, or a set: 7b, 1b, all");
  report->add_option("--elem-bytes", elem_bytes, "Bytes per cached element");
  report->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));

  auto* equiv = app.add_subcommand("equiv", "Equivalence and rank oracles on random weights");
  equiv->add_option("--arch", arch, "Architecture or 'all'");
  equiv->add_option("--kr-variant", kr_variant, "MFA-KR value path");
  equiv->add_option("--trials", trials);
  auto* equiv_seed = equiv->add_option("--seed", seed);
  equiv->add_option("--pos-embed", pos)->check(CLI::IsMember({"none", "rope", "alibi"}));

  std::string gc_pos = "rope";
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of a 2-layer H=16 model");
  gradcheck->add_option("--arch", arch)->required();
  gradcheck->add_option("--kr-variant", kr_variant);
  gradcheck->add_option("--pos-embed", gc_pos)->check(CLI::IsMember({"none", "rope", "alibi"}));
  auto* gc_seed = gradcheck->add_option("--seed", seed);

  auto* train = app.add_subcommand("train", "Byte-level training run; prints one JSON line per step");
  train->add_option("--config", config);
  train->add_option("--preset", preset_name);
  train->add_option("--shrink", shrink_factor, "Divide H, C, d, d_r and FFN by this factor");
  train->add_option("--corpus", corpus)->required();
  train->add_option("--out", out_path, "Checkpoint path");
  train->add_option("--steps", steps, "Override total_steps");
  auto* train_seed = train->add_option("--seed", seed);

  std::size_t decode_shrink = 32;
  auto* decode = app.add_subcommand("decode", "Greedy cached decoding with cache statistics");
  decode->add_option("--ckpt", ckpt);
  decode->add_option("--preset", preset_name);
  decode->add_option("--shrink", decode_shrink, "Preset scale-down factor");
  decode->add_option("--prompt", prompt);
  decode->add_option("--steps", decode_steps, "Tokens pushed through the cache");
  decode->add_option("--elem-bytes", elem_bytes);
  auto* decode_seed = decode->add_option("--seed", seed);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "gmha: " << e.what() << "\n";
    return kExitConfigError;
  }

  try {
    if (report->parsed()) return cmd_report(config, selector, elem_bytes, format, out);
    if (equiv->parsed()) return cmd_equiv(arch, kr_variant, trials, resolve_seed(0, equiv_seed, seed), pos, out);
    if (gradcheck->parsed()) return cmd_gradcheck(arch, kr_variant, gc_pos, resolve_seed(0, gc_seed, seed), out);
    if (train->parsed()) {
      return cmd_train(config, preset_name, shrink_factor, corpus, out_path, steps, train_seed, seed, out);
    }
    if (decode->parsed()) {
      return cmd_decode(ckpt, preset_name, decode_shrink, prompt, decode_steps, elem_bytes, decode_seed, seed, out);
    }
  } catch (const NumericError& e) {
    err << "gmha: " << e.what() << "\n";
    return kExitOracleFailure;
  } catch (const std::exception& e) {
    err << "gmha: " << e.what() << "\n";
    return kExitConfigError;
  }
  return kExitConfigError;
}

}  // namespace gmha::cli
