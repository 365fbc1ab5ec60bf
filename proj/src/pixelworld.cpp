#include "cg2a/pixelworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "cg2a/errors.hpp"
#include "cg2a/rng.hpp"

namespace cg2a::pixelworld {

namespace {

constexpr std::uint64_t kLayoutStream = 1;
constexpr std::uint64_t kAppearanceStream = 2;

constexpr float kTrainBackground[3] = {128 / 255.0f, 128 / 255.0f, 128 / 255.0f};
constexpr float kTrainAgent[3] = {230 / 255.0f, 40 / 255.0f, 40 / 255.0f};
constexpr float kTrainGoal[3] = {40 / 255.0f, 220 / 255.0f, 60 / 255.0f};

// Pixels are quantised to multiples of 1/255 so observations survive an
// 8-bit round trip exactly.
inline float quantize(double v) {
  return static_cast<float>(std::round(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f;
}

void random_color(Rng& rng, float out[3]) {
  for (int c = 0; c < 3; ++c) out[c] = quantize(rng.uniform());
}

Appearance draw_appearance(std::uint64_t seed, EnvVariant variant) {
  Appearance look;
  std::copy_n(kTrainBackground, 3, look.background);
  std::copy_n(kTrainBackground, 3, look.alternate);
  std::copy_n(kTrainAgent, 3, look.agent);
  std::copy_n(kTrainGoal, 3, look.goal);
  if (variant == EnvVariant::Train) return look;
  Rng rng(derive_seed(seed, kAppearanceStream, static_cast<std::uint64_t>(variant)));
  random_color(rng, look.background);
  random_color(rng, look.alternate);
  look.texture_seed = rng.next_u64();
  look.pattern_period = 6 + static_cast<int>(rng.below(10));
  return look;
}

// Agent: filled 4×4 square. Goal: 5-pixel-arm plus sign.
bool agent_pixel(int dy, int dx) { return dy >= 1 && dy <= 4 && dx >= 1 && dx <= 4; }
bool goal_pixel(int dy, int dx) {
  return (dy >= 1 && dy <= 4 && (dx == 2 || dx == 3)) || (dx >= 1 && dx <= 4 && (dy == 2 || dy == 3));
}

void background_pixel(const EnvState& s, int y, int x, float out[3]) {
  const auto& look = s.appearance;
  switch (s.variant) {
    case EnvVariant::Train:
    case EnvVariant::RandomColors:
      std::copy_n(look.background, 3, out);
      return;
    case EnvVariant::TextureBackground: {
      // Hashed blocks blended between the two episode colours.
      const int block = std::max(2, look.pattern_period / 2);
      const auto h = mix64(look.texture_seed ^ mix64(static_cast<std::uint64_t>(y / block) * 977 +
                                                    static_cast<std::uint64_t>(x / block)));
      const double t = static_cast<double>(h >> 11) * 0x1.0p-53;
      for (int c = 0; c < 3; ++c) out[c] = quantize(look.background[c] + (look.alternate[c] - look.background[c]) * t);
      return;
    }
    case EnvVariant::DynamicBackground: {
      const double phase = 2.0 * 3.141592653589793 * (double(x + y) + 2.0 * s.step) / look.pattern_period;
      const double t = 0.5 + 0.5 * std::sin(phase);
      for (int c = 0; c < 3; ++c) out[c] = quantize(look.background[c] + (look.alternate[c] - look.background[c]) * t);
      return;
    }
  }
}

GridPos moved(GridPos p, Action a) {
  switch (a) {
    case Action::Up: p.row = std::max(0, p.row - 1); break;
    case Action::Down: p.row = std::min(kGridSize - 1, p.row + 1); break;
    case Action::Left: p.col = std::max(0, p.col - 1); break;
    case Action::Right: p.col = std::min(kGridSize - 1, p.col + 1); break;
  }
  return p;
}

void push_frame(ImageObservation& frames, const Tensor<float>& frame) {
  const std::size_t plane = frame.size();
  std::copy(frames.raw() + plane, frames.raw() + frames.size(), frames.raw());
  std::copy(frame.raw(), frame.raw() + plane, frames.raw() + frames.size() - plane);
}

}  // namespace

std::string_view to_string(EnvVariant variant) {
  switch (variant) {
    case EnvVariant::Train: return "train";
    case EnvVariant::RandomColors: return "random_colors";
    case EnvVariant::TextureBackground: return "texture";
    case EnvVariant::DynamicBackground: return "dynamic";
  }
  return "train";
}

EnvVariant parse_variant(std::string_view text) {
  for (auto v : {EnvVariant::Train, EnvVariant::RandomColors, EnvVariant::TextureBackground,
                 EnvVariant::DynamicBackground}) {
    if (text == to_string(v)) return v;
  }
  throw StructuralError("unknown environment variant '" + std::string(text) +
                        "' (expected train, random_colors, texture or dynamic)");
}

Tensor<float> render_frame(const EnvState& s) {
  constexpr int n = static_cast<int>(kPixels);
  Tensor<float> frame({3, kPixels, kPixels});
  float px[3];
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const GridPos cell{y / kCellPixels, x / kCellPixels};
      const int dy = y % kCellPixels, dx = x % kCellPixels;
      if (cell == s.agent && agent_pixel(dy, dx)) {
        std::copy_n(s.appearance.agent, 3, px);
      } else if (cell == s.goal && goal_pixel(dy, dx)) {
        std::copy_n(s.appearance.goal, 3, px);
      } else {
        background_pixel(s, y, x, px);
      }
      for (int c = 0; c < 3; ++c) frame[(static_cast<std::size_t>(c) * kPixels + y) * kPixels + x] = px[c];
    }
  return frame;
}

std::pair<EnvState, ImageObservation> reset(std::uint64_t seed, EnvVariant variant) {
  EnvState s;
  s.variant = variant;
  s.episode_seed = seed;
  Rng layout(derive_seed(seed, kLayoutStream));
  const auto cells = static_cast<std::uint64_t>(kGridSize * kGridSize);
  const auto a = static_cast<int>(layout.below(cells));
  auto g = static_cast<int>(layout.below(cells - 1));
  if (g >= a) ++g;
  s.agent = {a / kGridSize, a % kGridSize};
  s.goal = {g / kGridSize, g % kGridSize};
  s.appearance = draw_appearance(seed, variant);

  const auto frame = render_frame(s);
  s.frames = ImageObservation({kFrames * 3, kPixels, kPixels});
  for (std::size_t f = 0; f < kFrames; ++f) std::copy(frame.raw(), frame.raw() + frame.size(), s.frames.raw() + f * frame.size());
  return {s, s.frames};
}

std::pair<EnvState, StepResult> step(const EnvState& state, Action action) {
  if (state.done) throw ProtocolError("step called on a finished episode");
  if (static_cast<std::size_t>(action) >= kActions) throw StructuralError("invalid action");
  EnvState s = state;
  s.agent = moved(s.agent, action);
  ++s.step;
  const bool reached = s.agent == s.goal;
  StepResult r;
  r.reward = (reached ? kGoalReward : 0.0) - kStepCost;
  s.done = reached || s.step >= kHorizon;
  r.done = s.done;
  push_frame(s.frames, render_frame(s));
  r.observation = s.frames;
  return {std::move(s), std::move(r)};
}

void dump_frame_ppm(const ImageObservation& obs, const std::string& path) {
  const std::size_t h = obs.dim(1), w = obs.dim(2);
  const std::size_t first = obs.dim(0) - 3;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path);
  out << "P6\n" << w << ' ' << h << "\n255\n";
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = obs[((first + c) * h + y) * w + x];
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f))));
      }
}

}  // namespace cg2a::pixelworld
