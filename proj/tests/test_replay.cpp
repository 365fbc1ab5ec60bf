#include <doctest.h>

#include <algorithm>

#include "cg2a/errors.hpp"
#include "cg2a/pixelworld.hpp"
#include "cg2a/replay.hpp"

using namespace cg2a;

namespace {

const Shape kShape{3, 2, 2};

Transition make(std::size_t id) {
  Transition t;
  t.obs = Tensor<float>(kShape, float(id % 256) / 255.0f);
  t.next_obs = Tensor<float>(kShape, float((id + 1) % 256) / 255.0f);
  t.action = id % 4;
  t.reward = double(id);
  t.done = id % 3 == 0;
  return t;
}

}  // namespace

TEST_CASE("push and gather round-trip") {
  ReplayBuffer buf(5, kShape);
  for (std::size_t i = 0; i < 3; ++i) buf.push(make(i));
  CHECK(buf.size() == 3);
  const std::size_t slots[] = {2, 0};
  const auto b = buf.gather(slots);
  CHECK(b.size() == 2);
  CHECK(b.obs.shape() == Shape{2, 3, 2, 2});
  CHECK(b.actions == std::vector<std::size_t>{2, 0});
  CHECK(b.rewards == std::vector<double>{2.0, 0.0});
  CHECK(b.done == std::vector<std::uint8_t>{0, 1});
  CHECK(b.obs[0] == 2 / 255.0f);
  CHECK(b.next_obs[12] == 1 / 255.0f);
  const std::size_t unfilled[] = {3};
  CHECK_THROWS_AS(buf.gather(unfilled), StructuralError);
}

TEST_CASE("ring buffer overwrites the oldest slot") {
  ReplayBuffer buf(4, kShape);
  for (std::size_t i = 0; i < 6; ++i) buf.push(make(i));
  CHECK(buf.size() == 4);
  const std::size_t all[] = {0, 1, 2, 3};
  CHECK(buf.gather(all).rewards == std::vector<double>{4, 5, 2, 3});
}

TEST_CASE("environment frames survive 8-bit storage exactly") {
  auto [state, obs] = pixelworld::reset(4, pixelworld::EnvVariant::TextureBackground);
  auto [next, res] = pixelworld::step(state, pixelworld::Action::Left);
  ReplayBuffer buf(2, obs.shape());
  buf.push({obs, 2, res.reward, res.observation, res.done});
  const std::size_t slot[] = {0};
  const auto b = buf.gather(slot);
  CHECK(std::equal(obs.data().begin(), obs.data().end(), b.obs.raw()));
  CHECK(std::equal(res.observation.data().begin(), res.observation.data().end(), b.next_obs.raw()));
}

TEST_CASE("invalid pushes and empty sampling") {
  ReplayBuffer buf(3, kShape);
  Rng rng(1);
  CHECK_THROWS_AS(buf.sample(rng, 2), ProtocolError);
  auto bad = make(1);
  bad.obs = Tensor<float>({3, 2, 3});
  CHECK_THROWS_AS(buf.push(bad), StructuralError);
  auto nan = make(1);
  nan.reward = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(buf.push(nan), NumericInputError);
  CHECK_THROWS_AS(ReplayBuffer(0, kShape), StructuralError);
}

TEST_CASE("sampling covers only filled slots") {
  ReplayBuffer buf(100, kShape);
  for (std::size_t i = 0; i < 7; ++i) buf.push(make(i));
  Rng rng(2);
  for (std::size_t s : buf.sample_indices(rng, 1000)) CHECK(s < 7);
}

TEST_CASE("sampling is uniform over a full buffer") {
  // 10^5 minibatches of 64 from 1000 slots: every slot's frequency is within
  // 5% of uniform.
  ReplayBuffer buf(1000, kShape);
  for (std::size_t i = 0; i < 1000; ++i) buf.push(make(i));
  Rng rng(2024);
  std::vector<std::size_t> counts(1000, 0);
  for (int draw = 0; draw < 100000; ++draw)
    for (std::size_t s : buf.sample_indices(rng, 64)) ++counts[s];
  const double expected = 100000.0 * 64 / 1000;
  double worst = 0.0;
  for (std::size_t c : counts) worst = std::max(worst, std::abs(double(c) - expected) / expected);
  CHECK(worst < 0.05);
}

TEST_CASE("sampling is deterministic per seed") {
  ReplayBuffer buf(50, kShape);
  for (std::size_t i = 0; i < 50; ++i) buf.push(make(i));
  Rng a(9), b(9);
  CHECK(buf.sample_indices(a, 64) == buf.sample_indices(b, 64));
}
