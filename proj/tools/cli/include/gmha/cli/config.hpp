#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gmha/arch.hpp"
#include "gmha/train.hpp"

namespace gmha::cli {

/// A named (architecture, dimensions, training) bundle. The arch and dims
/// inside train are authoritative; arch/dims accessors read through to them.
struct RunConfig {
  std::string name;
  TrainConfig train;

  const ArchSpec& arch() const { return train.arch; }
  const ModelDims& dims() const { return train.dims; }
};

// All preset names in table order.
const std::vector<std::string>& preset_names();
std::optional<RunConfig> find_preset(std::string_view name);
// Throws ConfigError for an unknown name.
RunConfig preset(std::string_view name);

/// Expands a selector into preset names: a preset name, "7b", "1b" or "all".
std::vector<std::string> expand_preset_selector(std::string_view selector);

/// Parses a JSON config document. Recognised top-level keys: name, preset,
/// arch, dims, train. With "preset", the remaining sections override the
/// preset's fields. Unknown keys at any level are rejected with ConfigError.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::string& path);

// Full JSON document that parse_run_config maps back to the same config.
std::string to_json(const RunConfig& cfg);

/// Scales a config down for desk-size runs: H, C, d, d_r and the FFN width are
/// divided by factor (n, g, m and L are kept), vocab becomes 256.
RunConfig shrink(const RunConfig& cfg, std::size_t factor);

/// Seed from the GMHA_SEED environment variable, if set and numeric.
std::optional<std::uint64_t> env_seed();

}  // namespace gmha::cli
