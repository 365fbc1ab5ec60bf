#pragma once

// ColorReach: an agent square moves on an 8×8 grid towards a goal marker.
// Frames are 48×48 RGB; an observation stacks the last three frames.
//
// Layout (agent and goal cells) is drawn from the episode seed alone, so for
// a given seed and action sequence every variant follows the same state
// trajectory and only the pixels differ.

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "cg2a/augbox.hpp"

namespace cg2a::pixelworld {

using augbox::ImageObservation;

inline constexpr int kGridSize = 8;
inline constexpr std::size_t kPixels = 48;
inline constexpr int kCellPixels = static_cast<int>(kPixels) / kGridSize;
inline constexpr int kHorizon = 100;
inline constexpr std::size_t kFrames = augbox::kFrameStack;
inline constexpr std::size_t kActions = 4;
inline constexpr double kStepCost = 0.01;
inline constexpr double kGoalReward = 1.0;

enum class EnvVariant { Train, RandomColors, TextureBackground, DynamicBackground };

std::string_view to_string(EnvVariant variant);
/// "train", "random_colors", "texture", "dynamic". Throws StructuralError.
EnvVariant parse_variant(std::string_view text);

enum class Action : std::size_t { Up = 0, Down = 1, Left = 2, Right = 3 };

struct GridPos {
  int row = 0;
  int col = 0;
  friend bool operator==(const GridPos&, const GridPos&) = default;
};

inline int manhattan(GridPos a, GridPos b) {
  return (a.row > b.row ? a.row - b.row : b.row - a.row) + (a.col > b.col ? a.col - b.col : b.col - a.col);
}

/// Per-episode rendering parameters, drawn from the episode seed.
struct Appearance {
  float background[3] = {0, 0, 0};
  float alternate[3] = {0, 0, 0};  // second texture / stripe colour
  float agent[3] = {0, 0, 0};
  float goal[3] = {0, 0, 0};
  std::uint64_t texture_seed = 0;
  int pattern_period = 8;
  friend bool operator==(const Appearance&, const Appearance&) = default;
};

struct EnvState {
  GridPos agent;
  GridPos goal;
  int step = 0;
  bool done = false;
  EnvVariant variant = EnvVariant::Train;
  std::uint64_t episode_seed = 0;
  Appearance appearance;
  ImageObservation frames;  // [kFrames·3, kPixels, kPixels]

  /// The underlying (variant-independent) state.
  bool same_dynamics(const EnvState& other) const {
    return agent == other.agent && goal == other.goal && step == other.step && done == other.done;
  }
};

struct StepResult {
  ImageObservation observation;
  double reward = 0.0;
  bool done = false;
};

std::pair<EnvState, ImageObservation> reset(std::uint64_t seed, EnvVariant variant);

/// Moves one cell (walls clamp), rewards 1 - 0.01 on reaching the goal and
/// -0.01 otherwise, and ends the episode on the goal or at the horizon.
/// Throws ProtocolError when called on a finished episode.
std::pair<EnvState, StepResult> step(const EnvState& state, Action action);

/// Renders a single 3×48×48 frame for the current state.
Tensor<float> render_frame(const EnvState& state);

/// Writes a binary PPM (P6) of the newest frame, for visual inspection.
void dump_frame_ppm(const ImageObservation& obs, const std::string& path);

}  // namespace cg2a::pixelworld
