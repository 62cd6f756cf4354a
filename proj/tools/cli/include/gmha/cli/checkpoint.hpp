#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "gmha/model.hpp"

namespace gmha::cli {

inline constexpr char kCheckpointMagic[] = "GMHA1";
inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  ToyLM model;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  int format_version = kCheckpointFormatVersion;
};

/// Layout: magic "GMHA1"; u64 manifest length; manifest JSON {format_version,
/// arch, dims, step, seed}; u64 tensor count; then per tensor u32 name length,
/// name, u32 rank, rank × u64 dims, little-endian f64 data. Integers are
/// little-endian as well.
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace gmha::cli
