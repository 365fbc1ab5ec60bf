#include <doctest.h>

#include <algorithm>

#include "cg2a/augbox.hpp"
#include "cg2a/errors.hpp"

using namespace cg2a;
using namespace cg2a::augbox;

namespace {

constexpr std::size_t kSide = 48;

ImageObservation random_obs(std::uint64_t seed, std::size_t side = kSide) {
  Rng rng(seed);
  ImageObservation obs({kFrameStack * kColorChannels, side, side});
  for (auto& v : obs.storage()) v = float(rng.uniform());
  return obs;
}

const DistractorBank& bank() {
  static const DistractorBank b(17, 64, kSide, kSide);
  return b;
}

std::vector<AugmentationSpec> all_kinds() {
  return {AugmentationSpec::identity(),  AugmentationSpec::random_shift(4), AugmentationSpec::random_conv(3),
          AugmentationSpec::cutout(0.3), AugmentationSpec::mixup(0.5),      AugmentationSpec::overlay(0.5),
          AugmentationSpec::overlay_s(0.15)};
}

}  // namespace

TEST_CASE("spec validation, names and parsing") {
  for (const auto& s : all_kinds()) {
    CHECK_NOTHROW(s.validate());
    CHECK(AugmentationSpec::parse(s.name()) == s);
  }
  CHECK(AugmentationSpec::random_shift(4).name() == "shift:4");
  CHECK_THROWS_AS(AugmentationSpec::overlay(1.0).validate(), StructuralError);
  CHECK_THROWS_AS(AugmentationSpec::overlay_s(0.2).validate(), StructuralError);
  CHECK_NOTHROW(AugmentationSpec::overlay_s(0.19).validate());
  CHECK_THROWS_AS(AugmentationSpec::cutout(0.0).validate(), StructuralError);
  CHECK_THROWS_AS(AugmentationSpec::cutout(1.0).validate(), StructuralError);
  CHECK_THROWS_AS(AugmentationSpec::parse("blur:3"), StructuralError);
  CHECK_THROWS_AS(AugmentationSpec::parse("shift:-1"), StructuralError);
}

TEST_CASE("distractor bank is a pure function of its seed") {
  const DistractorBank a(5, 16, 20, 20), b(5, 16, 20, 20), c(6, 16, 20, 20);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.image(i) == b.image(i));
    differs = differs || !(a.image(i) == c.image(i));
    CHECK(a.image(i).shape() == Shape{3, 20, 20});
    for (float v : a.image(i).data()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
  CHECK(differs);
}

TEST_CASE("identity and zero-pad shift are bit-exact passthroughs") {
  const auto obs = random_obs(1);
  Rng rng(2);
  CHECK(apply(obs, AugmentationSpec::identity(), bank(), rng) == obs);
  CHECK(apply(obs, AugmentationSpec::random_shift(0), bank(), rng) == obs);
}

TEST_CASE("cutout zeroes exactly the sampled box") {
  for (double f : {0.1, 0.25, 0.3, 0.5, 0.9}) {
    const auto obs = random_obs(3);
    Rng a(11), b(11);
    const auto out = apply(obs, AugmentationSpec::cutout(f), bank(), a);
    const auto box = sample_cutout_box(kSide, kSide, f, b);
    CHECK(box.height == std::size_t(f * kSide));
    for (std::size_t c = 0; c < obs.dim(0); ++c)
      for (std::size_t y = 0; y < kSide; ++y)
        for (std::size_t x = 0; x < kSide; ++x) {
          const std::size_t i = (c * kSide + y) * kSide + x;
          const bool inside = y >= box.top && y < box.top + box.height && x >= box.left && x < box.left + box.width;
          CHECK(out[i] == (inside ? 0.0f : obs[i]));
        }
  }
}

TEST_CASE("overlay examples") {
  ImageObservation obs({9, 2, 2}, 0.2f);
  Tensor<float> eps({3, 2, 2}, 0.8f);
  CHECK(overlay(obs, eps, 0.0) == obs);
  const auto half = overlay(obs, eps, 0.5);
  for (float v : half.data()) CHECK(v == doctest::Approx(0.5f));
  const auto s = overlay(obs, eps, 0.15);
  for (float v : s.data()) CHECK(v == doctest::Approx(0.85f * 0.2f + 0.15f * 0.8f));
  const auto literal = overlay(obs, eps, 0.5, OverlayForm::Literal);
  for (float v : literal.data()) CHECK(v == doctest::Approx(0.9f).epsilon(1e-6));
  CHECK_THROWS_AS(overlay(obs, Tensor<float>({3, 2, 3}), 0.5), StructuralError);
}

TEST_CASE("overlay output lies between the two blended pixels") {
  const auto obs = random_obs(4);
  for (double mu : {0.1, 0.5, 0.9}) {
    const auto& eps = bank().image(3);
    const auto out = overlay(obs, eps, mu);
    const std::size_t plane = eps.size();
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const float lo = std::min(obs[i], eps[i % plane]), hi = std::max(obs[i], eps[i % plane]);
      CHECK(out[i] >= lo - 1e-6f);
      CHECK(out[i] <= hi + 1e-6f);
    }
  }
}

TEST_CASE("every augmentation keeps values in range and is deterministic") {
  for (const auto& spec : all_kinds()) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto obs = random_obs(seed);
      Rng a(seed * 7), b(seed * 7);
      const auto out = apply(obs, spec, bank(), a);
      CHECK(out == apply(obs, spec, bank(), b));
      CHECK(out.shape() == obs.shape());
      CHECK(std::all_of(out.data().begin(), out.data().end(), [](float v) { return v >= 0.0f && v <= 1.0f; }));
    }
  }
}

TEST_CASE("one draw per observation is shared by all stacked frames") {
  ImageObservation obs({9, kSide, kSide});
  const auto frame = random_obs(8);
  for (std::size_t k = 0; k < kFrameStack; ++k)
    std::copy_n(frame.raw(), 3 * kSide * kSide, obs.raw() + k * 3 * kSide * kSide);
  for (const auto& spec : all_kinds()) {
    Rng rng(3);
    const auto out = apply(obs, spec, bank(), rng);
    const std::size_t plane = 3 * kSide * kSide;
    CHECK(std::equal(out.raw(), out.raw() + plane, out.raw() + plane));
    CHECK(std::equal(out.raw(), out.raw() + plane, out.raw() + 2 * plane));
  }
}

TEST_CASE("shift is a translated copy with replicated edges") {
  const auto obs = random_obs(9);
  Rng rng(21);
  const auto out = apply(obs, AugmentationSpec::random_shift(4), bank(), rng);
  // Some offset in [-4, 4]² must explain every output pixel.
  bool found = false;
  for (int dy = -4; dy <= 4 && !found; ++dy)
    for (int dx = -4; dx <= 4 && !found; ++dx) {
      bool ok = true;
      for (std::size_t c = 0; c < obs.dim(0) && ok; ++c)
        for (int y = 0; y < int(kSide) && ok; ++y)
          for (int x = 0; x < int(kSide) && ok; ++x) {
            const int sy = std::clamp(y + dy, 0, int(kSide) - 1), sx = std::clamp(x + dx, 0, int(kSide) - 1);
            ok = out[(c * kSide + y) * kSide + x] == obs[(c * kSide + sy) * kSide + sx];
          }
      found = ok;
    }
  CHECK(found);
}

TEST_CASE("random conv renormalises to the full unit range") {
  const auto obs = random_obs(10);
  Rng rng(4);
  const auto out = apply(obs, AugmentationSpec::random_conv(3), bank(), rng);
  const auto [lo, hi] = std::minmax_element(out.data().begin(), out.data().end());
  CHECK(*lo == doctest::Approx(0.0f).epsilon(1e-6));
  CHECK(*hi == doctest::Approx(1.0f).epsilon(1e-6));
}

TEST_CASE("mixup is a convex blend with a bank image") {
  const auto obs = random_obs(12);
  Rng rng(5);
  const auto out = apply(obs, AugmentationSpec::mixup(0.7), bank(), rng);
  Rng replay(5);
  const auto& img = bank().image(replay.below(bank().size()));
  for (std::size_t i = 0; i < obs.size(); i += 97)
    CHECK(out[i] == doctest::Approx(0.7 * obs[i] + 0.3 * img[i % img.size()]).epsilon(1e-5));
}

TEST_CASE("shape mismatch with the bank is rejected") {
  Rng rng(1);
  const auto small = random_obs(1, 32);
  CHECK_THROWS_AS(apply(small, AugmentationSpec::overlay(0.5), bank(), rng), StructuralError);
  CHECK_THROWS_AS(apply_batch(Tensor<float>({2, 9, 32, 32}), AugmentationSpec::mixup(0.5), bank(), 3),
                  StructuralError);
}

TEST_CASE("apply_batch uses one derived stream per sample") {
  Tensor<float> batch({3, 9, kSide, kSide});
  for (std::size_t b = 0; b < 3; ++b) {
    const auto o = random_obs(b + 30);
    std::copy(o.data().begin(), o.data().end(), batch.raw() + b * o.size());
  }
  const auto spec = AugmentationSpec::overlay(0.5);
  const auto out = apply_batch(batch, spec, bank(), 99);
  CHECK(out == apply_batch(batch, spec, bank(), 99));
  const std::size_t n = 9 * kSide * kSide;
  for (std::size_t b = 0; b < 3; ++b) {
    Rng rng(derive_seed(99, b));
    const ImageObservation one({9, kSide, kSide}, std::vector<float>(batch.raw() + b * n, batch.raw() + (b + 1) * n));
    const auto expect = apply(one, spec, bank(), rng);
    CHECK(std::equal(expect.raw(), expect.raw() + n, out.raw() + b * n));
  }
}

TEST_CASE("combinations") {
  const auto def = make_combination(default_augmentations());
  CHECK(def.names() == std::vector<std::string>{"identity", "conv:3", "overlay:0.5", "overlay_s:0.15"});
  const auto ana = make_combination(analysis_augmentations());
  CHECK(ana.names() == std::vector<std::string>{"identity", "shift:4", "conv:3", "cutout:0.3", "mixup:0.5"});
  const std::vector<AugmentationSpec> only_id = {AugmentationSpec::identity()};
  CHECK(make_combination(only_id).size() == 1);
  const std::vector<AugmentationSpec> id_last = {AugmentationSpec::mixup(0.5), AugmentationSpec::identity()};
  CHECK(make_combination(id_last).names() == std::vector<std::string>{"identity", "mixup:0.5"});
  const std::vector<AugmentationSpec> twice = {AugmentationSpec::identity(), AugmentationSpec::identity()};
  CHECK_THROWS_AS(make_combination(twice), StructuralError);
  CHECK_THROWS_AS(make_combination(std::span<const AugmentationSpec>{}), StructuralError);
}
