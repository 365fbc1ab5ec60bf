#pragma once

// Run configuration: a plain-text `key = value` file.
//
//   # comment
//   version = 1
//   total_steps = 30000
//   augmentations = conv:3, overlay:0.5, overlay_s:0.15
//   eval_variants = train, random_colors
//
// Every key is optional; unset keys keep their defaults. Unknown and
// repeated keys are rejected. echo_config() writes every key, so the echo
// parses back to an equal RunConfig.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cg2a/agent.hpp"
#include "cg2a/pixelworld.hpp"

namespace cg2a {

inline constexpr int kConfigVersion = 1;

struct RunConfig {
  int version = kConfigVersion;
  agent::TrainConfig train;
  std::vector<pixelworld::EnvVariant> eval_variants = {pixelworld::EnvVariant::Train,
                                                       pixelworld::EnvVariant::RandomColors};
  std::size_t eval_episodes = 100;
  std::uint64_t eval_seed = 1000;
  // Relative paths resolve against the output root.
  std::string output_dir = "run";
  // Diagnostics cover the last diagnostics_steps steps of the log.
  std::uint64_t diagnostics_steps = 1000;
  std::uint64_t diagnostics_stride = 100;
  std::uint64_t checkpoint_every = 5000;
  bool dump_frames = false;

  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Throws ConfigError (with the key as field) on any malformed or invalid entry.
RunConfig parse_config_text(std::string_view text);
/// Throws IoError when the file cannot be read.
RunConfig parse_config(const std::filesystem::path& path);
std::string echo_config(const RunConfig& config);

}  // namespace cg2a
