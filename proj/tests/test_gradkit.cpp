#include <doctest.h>

#include <bit>
#include <cmath>

#include "cg2a/errors.hpp"
#include "cg2a/gradkit.hpp"
#include "support.hpp"

using namespace cg2a;
using namespace cg2a::gradkit;

namespace {

GradientSet set(std::vector<FlatGradient> g) { return GradientSet(std::move(g)); }

std::vector<bool> bits(const ConflictMask& m) { return {m.bits.begin(), m.bits.end()}; }

}  // namespace

TEST_CASE("gradient set validation") {
  CHECK_THROWS_AS(set({}), StructuralError);
  CHECK_THROWS_AS(set({{1.0, 2.0}, {1.0}}), StructuralError);
  CHECK_THROWS_AS(set({{}, {}}), StructuralError);
  CHECK_THROWS_AS(set({{1.0, NAN}, {1.0, 2.0}}), NumericInputError);
  CHECK_THROWS_AS(set({{1.0, 2.0}, {INFINITY, 2.0}}), NumericInputError);
  CHECK_NOTHROW(set({{1.0, 2.0}}));
}

TEST_CASE("gas weights on hand examples") {
  auto w = gas_weights(set({{1, 0}, {1, 0}}));
  CHECK(w.w == std::vector<double>{0.5, 0.5});
  CHECK_FALSE(w.fallback_used);

  w = gas_weights(set({{2, 0}, {1, 0}}));
  CHECK(w.w[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(w.w[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK_FALSE(w.fallback_used);

  w = gas_weights(set({{1, 0}, {-1, 0}}));
  CHECK(w.w == std::vector<double>{0.5, 0.5});
  CHECK(w.fallback_used);

  CHECK_THROWS_AS(gas_weights(set({{1, 0}, {1, 0}}), 0.0), StructuralError);
}

TEST_CASE("gas weights may be negative and stay L1-normalized") {
  // s = (g0·(g0+g1+g2), ...) with g2 opposing the others.
  const auto w = gas_weights(set({{1, 0}, {1, 0.1}, {-3, 0}}));
  double l1 = 0.0;
  for (double x : w.w) l1 += std::abs(x);
  CHECK(l1 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w.w[0] < 0.0);
  CHECK(w.w[2] > 0.0);
}

TEST_CASE("gas weight argmax follows alignment with the set sum") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const auto raw = testing::random_grads(rng, 4, 8);
    const auto w = gas_weights(GradientSet(raw));
    std::vector<double> total(8, 0.0);
    for (const auto& g : raw)
      for (std::size_t j = 0; j < 8; ++j) total[j] += g[j];
    std::size_t best_w = 0, best_dot = 0;
    double top_dot = -INFINITY;
    for (std::size_t i = 0; i < 4; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < 8; ++j) dot += raw[i][j] * total[j];
      if (dot > top_dot) top_dot = dot, best_dot = i;
      if (w.w[i] > w.w[best_w]) best_w = i;
    }
    CHECK(best_w == best_dot);
  }
}

TEST_CASE("conflict mask on hand examples") {
  const auto g = set({{1, -2, 3}, {2, -1, -3}});
  CHECK(bits(conflict_mask(g, AgreementMode::SignSymmetric)) == std::vector<bool>{true, true, false});
  CHECK(bits(conflict_mask(g, AgreementMode::StrictPaper)) == std::vector<bool>{true, false, false});
  const auto same = set({{0.5, -1, 2}, {0.5, -1, 2}});
  const auto m = conflict_mask(same, AgreementMode::SignSymmetric);
  CHECK(m.conflicts == 0);
  CHECK(m.conflict_fraction() == 0.0);
  const auto zero = set({{0, 1}, {0, 1}});
  CHECK(bits(conflict_mask(zero, AgreementMode::SignSymmetric)) == std::vector<bool>{false, true});
}

TEST_CASE("agreement mode names round-trip") {
  CHECK(parse_agreement_mode("strict") == AgreementMode::StrictPaper);
  CHECK(parse_agreement_mode(to_string(AgreementMode::SignSymmetric)) == AgreementMode::SignSymmetric);
  CHECK_THROWS_AS(parse_agreement_mode("both"), StructuralError);
}

TEST_CASE("damping distribution") {
  CHECK_THROWS_AS(DampingDistribution(0.5, 0.3), StructuralError);
  CHECK_THROWS_AS(DampingDistribution(-0.1, 0.3), StructuralError);
  CHECK_THROWS_AS(DampingDistribution(0.2, 1.1), StructuralError);
  const DampingDistribution def;
  CHECK(def.alpha() == 0.22);
  CHECK(def.beta() == 0.28);
  Rng rng(3);
  CHECK(sample_damping(rng, DampingDistribution(0.25, 0.25)) == 0.25);
  for (int i = 0; i < 1000; ++i) {
    const double g = sample_damping(rng, def);
    CHECK(g >= 0.22);
    CHECK(g <= 0.28);
  }
}

TEST_CASE("sgs_apply hand example and edge values") {
  const auto g = set({{1, -2}, {2, 1}});
  const auto mask = conflict_mask(g, AgreementMode::SignSymmetric);
  CHECK(bits(mask) == std::vector<bool>{true, false});
  const auto out = sgs_apply(g, mask, 0.25);
  CHECK(out[0] == FlatGradient{1, -0.5});
  CHECK(out[1] == FlatGradient{2, 0.25});
  CHECK(sgs_apply(g, mask, 1.0) == g);
  const auto zeroed = sgs_apply(g, mask, 0.0);
  CHECK(zeroed[0] == FlatGradient{1, 0});
  CHECK(zeroed[1] == FlatGradient{2, 0});

  CHECK_THROWS_AS(sgs_apply(g, mask, 1.5), StructuralError);
  ConflictMask short_mask;
  short_mask.bits = {1};
  CHECK_THROWS_AS(sgs_apply(g, short_mask, 0.5), StructuralError);
}

TEST_CASE("weighted_combine examples") {
  const auto g = set({{3, 0}, {0, 3}});
  const auto out = weighted_combine(g, {{2.0 / 3.0, 1.0 / 3.0}, false});
  CHECK(out[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-15));
  Rng rng(5);
  const auto raw = testing::random_grads(rng, 2, 6);
  CHECK(weighted_combine(GradientSet(raw), {{1.0, 0.0}, false}) == raw[0]);
  const FlatGradient same = raw[0];
  const auto third = weighted_combine(set({same, same, same}), WeightVector::uniform(3, false));
  CHECK(testing::max_abs_diff(third, same) < 1e-15);
  const auto half = weighted_combine(set({same, same}), WeightVector::uniform(2, false));
  CHECK(half == same);
  CHECK_THROWS_AS(weighted_combine(g, {{1.0}, false}), StructuralError);
}

TEST_CASE("sgs_combine equals the two-pass composition bit for bit") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const GradientSet g(testing::random_grads(rng, 2 + trial % 4, 5000));
    const auto mask = conflict_mask(g, trial % 2 ? AgreementMode::StrictPaper : AgreementMode::SignSymmetric);
    const auto w = gas_weights(g);
    const double gamma = rng.uniform();
    CHECK(sgs_combine(g, mask, gamma, w) == weighted_combine(sgs_apply(g, mask, gamma), w));
  }
}

TEST_CASE("cg2a_step examples") {
  Rng rng(1);
  const FlatGradient v = {0.3, -1.2, 2.5};
  const auto sym = cg2a_step(set({v, v, v}), rng, AgreementMode::SignSymmetric);
  CHECK(testing::max_abs_diff(sym.combined, v) < 1e-15);
  CHECK(sym.diagnostics.weights.w[0] == doctest::Approx(1.0 / 3.0));
  const FlatGradient pos = {0.3, 1.2, 2.5};
  const auto strict_pos = cg2a_step(set({pos, pos, pos}), rng, AgreementMode::StrictPaper);
  CHECK(testing::max_abs_diff(strict_pos.combined, pos) < 1e-15);
  // The literal rule treats an all-negative column as conflict, so it is damped.
  const auto strict = cg2a_step(set({v, v, v}), rng, AgreementMode::StrictPaper);
  CHECK(strict.combined[0] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(strict.combined[1] == doctest::Approx(-1.2 * strict.diagnostics.gamma_sampled).epsilon(1e-12));

  const auto opposed = cg2a_step(set({{1, 0}, {-1, 0}}), rng, AgreementMode::SignSymmetric);
  CHECK(opposed.combined == FlatGradient{0, 0});
  CHECK(opposed.diagnostics.weights.fallback_used);
  CHECK(opposed.diagnostics.conflict_fraction == 1.0);
  CHECK(opposed.diagnostics.pairwise_cosine[1] == -1.0);
  CHECK(opposed.diagnostics.gamma_sampled >= 0.22);
  CHECK(opposed.diagnostics.gamma_sampled <= 0.28);

  Rng data(9);
  const GradientSet g(testing::random_grads(data, 3, 100));
  Rng a(77), b(77);
  const auto first = cg2a_step(g, a);
  const auto second = cg2a_step(g, b);
  CHECK(first.combined == second.combined);
  CHECK(first.diagnostics == second.diagnostics);
}

TEST_CASE("cg2a_step diagnostics geometry") {
  Rng rng(31);
  const auto raw = testing::random_grads(rng, 4, 50);
  auto with_zero = raw;
  std::fill(with_zero[2].begin(), with_zero[2].end(), 0.0);
  for (const auto& r : {raw, with_zero}) {
    const auto out = cg2a_step(GradientSet(r), rng);
    const auto& d = out.diagnostics;
    REQUIRE(d.pairwise_cosine.size() == 16);
    for (std::size_t i = 0; i < 4; ++i) {
      double norm = 0.0;
      for (double x : r[i]) norm += x * x;
      CHECK(d.per_grad_l2_norm[i] == doctest::Approx(std::sqrt(norm)).epsilon(1e-12));
      for (std::size_t j = 0; j < 4; ++j) {
        CHECK(d.pairwise_cosine[i * 4 + j] == d.pairwise_cosine[j * 4 + i]);
        CHECK(std::abs(d.pairwise_cosine[i * 4 + j]) <= 1.0);
      }
      if (norm > 0) CHECK(d.pairwise_cosine[i * 4 + i] == 1.0);
    }
    std::size_t neg = 0;
    for (double x : d.weights.w) neg += x < 0;
    CHECK(d.negative_weights == neg);
  }
}

TEST_CASE("sign symmetry holds for random sets in symmetric mode") {
  Rng data(41);
  for (int trial = 0; trial < 20; ++trial) {
    const auto raw = testing::random_grads(data, 3, 200);
    auto neg = raw;
    for (auto& g : neg)
      for (auto& x : g) x = -x;
    Rng a(trial), b(trial);
    const auto pos_out = cg2a_step(GradientSet(raw), a);
    const auto neg_out = cg2a_step(GradientSet(neg), b);
    CHECK(conflict_mask(GradientSet(raw), AgreementMode::SignSymmetric).bits ==
          conflict_mask(GradientSet(neg), AgreementMode::SignSymmetric).bits);
    for (std::size_t j = 0; j < 200; ++j) {
      CHECK(std::bit_cast<std::uint64_t>(neg_out.combined[j]) ==
            (std::bit_cast<std::uint64_t>(pos_out.combined[j]) ^ 0x8000000000000000ULL));
    }
  }
}

TEST_CASE("a single gradient never conflicts") {
  const auto g = set({{0.0, -1.0, 2.0}});
  for (auto mode : {AgreementMode::StrictPaper, AgreementMode::SignSymmetric}) {
    const auto m = conflict_mask(g, mode);
    CHECK(m.conflicts == 0);
    CHECK(m.conflict_fraction() == 0.0);
    Rng rng(3);
    CHECK(cg2a_step(g, rng, mode).combined == g[0]);
  }
  // Duplicating it makes the zero component a conflict again.
  CHECK(conflict_mask(set({{0.0, -1.0, 2.0}, {0.0, -1.0, 2.0}}), AgreementMode::SignSymmetric).conflicts == 1);
}
