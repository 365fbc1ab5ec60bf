#include <doctest.h>

#include <algorithm>
#include <set>

#include "cg2a/errors.hpp"
#include "cg2a/pixelworld.hpp"

using namespace cg2a;
using namespace cg2a::pixelworld;

namespace {

const EnvVariant kVariants[] = {EnvVariant::Train, EnvVariant::RandomColors, EnvVariant::TextureBackground,
                                EnvVariant::DynamicBackground};

bool in_unit_range(const ImageObservation& obs) {
  return std::all_of(obs.data().begin(), obs.data().end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
}

// Pixel (c, y, x) of the newest frame.
float newest(const ImageObservation& obs, std::size_t c, std::size_t y, std::size_t x) {
  return obs[((obs.dim(0) - 3 + c) * kPixels + y) * kPixels + x];
}

Action toward(GridPos from, GridPos to) {
  if (to.row < from.row) return Action::Up;
  if (to.row > from.row) return Action::Down;
  if (to.col < from.col) return Action::Left;
  return Action::Right;
}

}  // namespace

TEST_CASE("variant names round-trip") {
  for (auto v : kVariants) CHECK(parse_variant(to_string(v)) == v);
  CHECK_THROWS_AS(parse_variant("video"), StructuralError);
}

TEST_CASE("reset is deterministic and well formed") {
  for (std::uint64_t seed = 0; seed < 50; ++seed)
    for (auto v : kVariants) {
      const auto [s1, o1] = reset(seed, v);
      const auto [s2, o2] = reset(seed, v);
      CHECK(o1 == o2);
      CHECK(o1.shape() == Shape{9, kPixels, kPixels});
      CHECK(in_unit_range(o1));
      CHECK_FALSE(s1.agent == s1.goal);
      CHECK(s1.agent.row >= 0);
      CHECK(s1.agent.row < kGridSize);
      CHECK(s1.goal.col < kGridSize);
      const std::size_t plane = 3 * kPixels * kPixels;
      CHECK(std::equal(o1.raw(), o1.raw() + plane, o1.raw() + plane));
      CHECK(std::equal(o1.raw(), o1.raw() + plane, o1.raw() + 2 * plane));
    }
}

TEST_CASE("train variant uses a fixed palette, random colours vary per episode") {
  std::set<float> train_bg, random_bg;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto [ts, to] = reset(seed, EnvVariant::Train);
    const auto [rs, ro] = reset(seed, EnvVariant::RandomColors);
    CHECK(ts.appearance.background[0] == 128 / 255.0f);
    CHECK(ts.appearance.agent[0] == rs.appearance.agent[0]);
    CHECK(ts.appearance.goal[1] == rs.appearance.goal[1]);
    // Top-left pixel of a cell corner is always background.
    const auto cell = [&](GridPos p) { return std::pair<std::size_t, std::size_t>(p.row * kCellPixels, p.col * kCellPixels); };
    const auto [y, x] = cell(ts.agent);
    train_bg.insert(newest(to, 0, y, x));
    random_bg.insert(newest(ro, 0, y, x));
    // The agent square sits at the same pixels in both renderings.
    CHECK(newest(to, 0, y + 2, x + 2) == ts.appearance.agent[0]);
    CHECK(newest(ro, 0, y + 2, x + 2) == rs.appearance.agent[0]);
  }
  CHECK(train_bg.size() == 1);
  CHECK(random_bg.size() > 10);
}

TEST_CASE("step rewards, walls and termination") {
  // Find a seed whose agent starts next to a wall on the top row.
  std::uint64_t seed = 0;
  EnvState s;
  for (;; ++seed) {
    s = reset(seed, EnvVariant::Train).first;
    if (s.agent.row == 0 && s.goal.row != 0) break;
  }
  auto [wall, r] = step(s, Action::Up);
  CHECK(wall.agent == s.agent);
  CHECK(r.reward == -0.01);
  CHECK_FALSE(r.done);
  CHECK(wall.step == 1);

  // Walk to one cell short of the goal, then step onto it.
  EnvState cur = reset(3, EnvVariant::Train).first;
  const int d = manhattan(cur.agent, cur.goal);
  for (int i = 0; i < d - 1; ++i) {
    auto [next, res] = step(cur, toward(cur.agent, cur.goal));
    CHECK(res.reward == -0.01);
    cur = next;
  }
  auto [fin, last] = step(cur, toward(cur.agent, cur.goal));
  CHECK(last.reward == doctest::Approx(0.99).epsilon(1e-15));
  CHECK(last.done);
  CHECK_THROWS_AS(step(fin, Action::Up), ProtocolError);
}

TEST_CASE("frame stack shifts by one frame per step") {
  auto [s, obs] = reset(5, EnvVariant::DynamicBackground);
  const std::size_t plane = 3 * kPixels * kPixels;
  auto [s1, r1] = step(s, Action::Down);
  auto [s2, r2] = step(s1, Action::Left);
  CHECK(std::equal(r2.observation.raw(), r2.observation.raw() + plane, r1.observation.raw() + plane));
  CHECK(std::equal(r2.observation.raw() + plane, r2.observation.raw() + 2 * plane, r1.observation.raw() + 2 * plane));
  CHECK(render_frame(s2).storage() ==
        std::vector<float>(r2.observation.raw() + 2 * plane, r2.observation.raw() + 3 * plane));
}

TEST_CASE("dynamic background changes with time even when the agent stays put") {
  auto [s, obs] = reset(11, EnvVariant::DynamicBackground);
  while (s.agent.row != 0 || s.goal.row == 0) s = reset(s.episode_seed + 1, EnvVariant::DynamicBackground).first;
  const auto before = render_frame(s);
  const auto after = step(s, Action::Up).first;
  CHECK(after.agent == s.agent);
  CHECK_FALSE(render_frame(after) == before);
}

TEST_CASE("state trajectory is shared by all variants and random episodes stay in bounds") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng actions(seed);
    std::vector<Action> plan(kHorizon);
    for (auto& a : plan) a = static_cast<Action>(actions.below(kActions));
    std::vector<EnvState> states;
    for (auto v : kVariants) states.push_back(reset(seed, v).first);
    double ret = 0.0;
    for (int t = 0; t < kHorizon && !states[0].done; ++t) {
      std::vector<StepResult> results;
      for (auto& st : states) {
        auto [next, res] = step(st, plan[t]);
        st = next;
        results.push_back(res);
        CHECK(in_unit_range(res.observation));
      }
      for (std::size_t v = 1; v < states.size(); ++v) {
        CHECK(states[v].same_dynamics(states[0]));
        CHECK(results[v].reward == results[0].reward);
      }
      ret += results[0].reward;
    }
    CHECK(states[0].done);
    CHECK(ret >= -1.0 - 1e-12);
    CHECK(ret <= 0.99 + 1e-12);
  }
}

TEST_CASE("shortest path achieves 1 - 0.01 d") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto s = reset(seed, EnvVariant::TextureBackground).first;
    const int d = manhattan(s.agent, s.goal);
    double ret = 0.0;
    while (!s.done) {
      auto [next, r] = step(s, toward(s.agent, s.goal));
      ret += r.reward;
      s = next;
    }
    CHECK(ret == doctest::Approx(1.0 - 0.01 * d).epsilon(1e-12));
    CHECK(s.step == d);
  }
}

TEST_CASE("frames are multiples of 1/255") {
  for (auto v : kVariants) {
    const auto obs = reset(9, v).second;
    for (std::size_t i = 0; i < obs.size(); i += 7) {
      const float scaled = obs[i] * 255.0f;
      CHECK(scaled == doctest::Approx(std::round(scaled)).epsilon(1e-5));
    }
  }
}
