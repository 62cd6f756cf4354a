#include "gmha/cli/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "gmha/errors.hpp"

namespace gmha::cli {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& in, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ConfigError(std::string("checkpoint: truncated ") + what);
  return v;
}

std::string take_bytes(std::istream& in, std::uint64_t n, const char* what) {
  if (n > (1ull << 32)) throw ConfigError(std::string("checkpoint: implausible ") + what + " length");
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw ConfigError(std::string("checkpoint: truncated ") + what);
  }
  return s;
}

json manifest_of(const Checkpoint& c) {
  const auto& a = c.model.arch;
  const auto& d = c.model.dims;
  json arch = {{"kind", std::string(to_string(a.kind))},
               {"factored_q", a.factored_q},
               {"pos_embed", std::string(to_string(a.pos_embed.kind))},
               {"rope_base", a.pos_embed.rope_base},
               {"score_scale", a.score_scale ? json(*a.score_scale) : json(nullptr)}};
  if (a.kr_variant) arch["kr_variant"] = std::string(to_string(*a.kr_variant));
  return {{"format_version", c.format_version},
          {"arch", arch},
          {"dims",
           {{"hidden", d.hidden}, {"layers", d.layers}, {"n_heads", d.n_heads}, {"head_dim", d.head_dim},
            {"latent", d.latent}, {"groups", d.groups}, {"rope_dim", d.rope_dim}, {"vocab", d.vocab},
            {"ffn", d.ffn}}},
          {"step", c.step},
          {"seed", c.seed}};
}

void apply_manifest(const json& m, Checkpoint& c) {
  try {
    c.format_version = m.at("format_version").get<int>();
    if (c.format_version != kCheckpointFormatVersion) {
      throw ConfigError("checkpoint: unsupported format_version " + std::to_string(c.format_version));
    }
    const json& a = m.at("arch");
    ArchSpec spec;
    spec.kind = parse_arch_kind(a.at("kind").get<std::string>());
    if (a.contains("kr_variant")) spec.kr_variant = parse_kr_variant(a.at("kr_variant").get<std::string>());
    spec.factored_q = a.at("factored_q").get<bool>();
    spec.pos_embed.kind = parse_pos_embed(a.at("pos_embed").get<std::string>());
    spec.pos_embed.rope_base = a.at("rope_base").get<double>();
    if (!a.at("score_scale").is_null()) spec.score_scale = a.at("score_scale").get<double>();
    const json& d = m.at("dims");
    ModelDims dims;
    dims.hidden = d.at("hidden").get<std::size_t>();
    dims.layers = d.at("layers").get<std::size_t>();
    dims.n_heads = d.at("n_heads").get<std::size_t>();
    dims.head_dim = d.at("head_dim").get<std::size_t>();
    dims.latent = d.at("latent").get<std::size_t>();
    dims.groups = d.at("groups").get<std::size_t>();
    dims.rope_dim = d.at("rope_dim").get<std::size_t>();
    dims.vocab = d.at("vocab").get<std::size_t>();
    dims.ffn = d.at("ffn").get<std::size_t>();
    c.model.arch = spec;
    c.model.dims = dims;
    c.step = m.at("step").get<std::uint64_t>();
    c.seed = m.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint: bad manifest: ") + e.what());
  }
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kCheckpointMagic, sizeof kCheckpointMagic - 1);
  const std::string manifest = manifest_of(ckpt).dump();
  put<std::uint64_t>(out, manifest.size());
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  put<std::uint64_t>(out, ckpt.model.params.size());
  for (const auto& [name, t] : ckpt.model.params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t dim : t.shape()) put<std::uint64_t>(out, dim);
    out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw ConfigError("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[sizeof kCheckpointMagic - 1];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw ConfigError("checkpoint: bad magic");
  }
  Checkpoint c;
  const auto manifest_len = take<std::uint64_t>(in, "manifest length");
  json manifest;
  try {
    manifest = json::parse(take_bytes(in, manifest_len, "manifest"));
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("checkpoint: manifest is not JSON: ") + e.what());
  }
  apply_manifest(manifest, c);

  const auto count = take<std::uint64_t>(in, "tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = take_bytes(in, take<std::uint32_t>(in, "name length"), "name");
    const auto rank = take<std::uint32_t>(in, "rank");
    if (rank > 8) throw ConfigError("checkpoint: implausible rank for " + name);
    Shape shape(rank);
    for (auto& dim : shape) dim = take<std::uint64_t>(in, "dims");
    Tensor t(shape);
    if (t.size() > 0 && !in.read(reinterpret_cast<char*>(t.data().data()),
                                 static_cast<std::streamsize>(t.size() * sizeof(double)))) {
      throw ConfigError("checkpoint: truncated data for " + name);
    }
    if (!c.model.params.emplace(std::move(name), std::move(t)).second) {
      throw ConfigError("checkpoint: duplicate tensor");
    }
  }

  // Every parameter of the declared model must be present with its shape.
  for (const auto& spec : model_param_specs(c.model.arch, c.model.dims)) {
    auto it = c.model.params.find(spec.name);
    if (it == c.model.params.end()) throw ConfigError("checkpoint: missing tensor " + spec.name);
    if (it->second.shape() != spec.shape) {
      throw ConfigError("checkpoint: " + spec.name + " has shape " + shape_str(it->second.shape()) + ", expected " +
                        shape_str(spec.shape));
    }
  }
  if (c.model.params.size() != model_param_specs(c.model.arch, c.model.dims).size()) {
    throw ConfigError("checkpoint: unexpected extra tensors");
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("checkpoint: cannot open " + path + " for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint: cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace gmha::cli
