#pragma once

// Binary checkpoint container.
//
// Layout (all integers little-endian, reals IEEE-754 binary64):
//
//   char[8]  magic "CG2ACKPT"
//   u32      format version (1)
//   u32      flattening-order version (1: layer order, then row-major)
//   u64      FNV-1a hash of the canonical network spec
//   u32      spec length, then that many bytes of the canonical spec
//   u64      training step
//   u64      parameter count P, then P reals in flattening order
//   u8       optimizer kind (0 sgd, 1 adam)
//   u64      optimizer step
//   u64      length, then reals: first moment
//   u64      length, then reals: second moment
//   u64      FNV-1a hash of every preceding byte

#include <cstdint>
#include <filesystem>

#include "cg2a/optim.hpp"
#include "cg2a/qnet.hpp"

namespace cg2a {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;
inline constexpr std::uint32_t kFlattenOrderVersion = 1;

struct Checkpoint {
  QNetworkSpec spec;
  ParamSet<float> params;
  std::uint64_t train_step = 0;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  OptimizerState optimizer_state;
};

/// Writes to a temporary sibling and renames it into place. Throws IoError.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws IoError on unreadable, truncated or corrupt files (bad magic,
/// version, spec hash or trailing checksum).
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Write-temp-then-rename for text outputs.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace cg2a
