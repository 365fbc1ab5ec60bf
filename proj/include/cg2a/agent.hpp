#pragma once

// Discrete-action Q-learning with an augmentation combination.
//
// Every update samples one minibatch, computes TD targets on the raw
// successor observations with the target network, and then evaluates the
// critic loss once per member of the combination (same batch, same targets).
// The resulting gradient set is reduced to one update direction according to
// the aggregation mode.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "cg2a/augbox.hpp"
#include "cg2a/gradkit.hpp"
#include "cg2a/metrics.hpp"
#include "cg2a/optim.hpp"
#include "cg2a/pixelworld.hpp"
#include "cg2a/qnet.hpp"
#include "cg2a/replay.hpp"

namespace cg2a::agent {

// Stream tags for derive_seed(config.seed, tag, ...) used by train().
inline constexpr std::uint64_t kActStream = 10;
inline constexpr std::uint64_t kReplayStream = 11;
inline constexpr std::uint64_t kDampingStream = 12;
inline constexpr std::uint64_t kAugmentStream = 13;
inline constexpr std::uint64_t kEpisodeStream = 14;
inline constexpr std::uint64_t kInitStream = 15;

enum class Aggregation {
  // GAS weights applied to soft-surgered gradients.
  CG2A,
  // Uniform mean over the full combination.
  NaiveAverage,
  // GAS weights on the raw gradients.
  GASOnly,
  // Uniform mean of soft-surgered gradients.
  SGSOnly,
  // Uniform mean over [Identity, single_aug].
  SingleAug,
  // Identity only.
  NoAug,
};

std::string_view to_string(Aggregation mode);
Aggregation parse_aggregation(std::string_view text);

struct TrainConfig {
  std::uint64_t total_steps = 30000;
  std::size_t batch_size = 64;
  double discount = 0.99;
  OptimizerConfig optimizer;
  std::uint64_t target_sync_period = 500;
  std::size_t buffer_capacity = 20000;
  std::uint64_t warmup_steps = 500;
  double temperature_start = 1.0;
  double temperature_end = 0.05;
  // Share of total_steps over which the temperature anneals linearly.
  double temperature_anneal_fraction = 0.5;
  std::vector<augbox::AugmentationSpec> augmentations = augbox::default_augmentations();
  augbox::AugmentationSpec single_aug = augbox::AugmentationSpec::random_shift(4);
  augbox::OverlayForm overlay_form = augbox::OverlayForm::Convex;
  gradkit::AgreementMode agreement = gradkit::AgreementMode::SignSymmetric;
  gradkit::DampingDistribution damping;
  Aggregation aggregation = Aggregation::CG2A;
  std::uint64_t seed = 1;
  std::uint64_t bank_seed = 7;
  std::size_t bank_size = 64;
  pixelworld::EnvVariant train_variant = pixelworld::EnvVariant::Train;
  QNetworkSpec network;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  /// The combination actually trained on for this aggregation mode.
  augbox::Combination combination() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// q̂_b = r_b + discount·(1 - done_b)·max_a Q_target(next_obs_b, a).
template <typename T>
std::vector<double> td_targets(const QNetworkSpec& spec, const ParamSet<T>& target_params,
                               const Tensor<T>& next_obs, std::span<const double> rewards,
                               std::span<const std::uint8_t> done, double discount);

struct CriticGradients {
  gradkit::GradientSet grads;
  std::vector<double> losses;
  std::size_t augmented_samples = 0;
};

/// One critic loss and gradient per combination member, all on `obs` with
/// the same actions and targets. Member i is augmented with per-sample
/// streams derived from derive_seed(seed, i).
CriticGradients critic_gradient_set(const QNetworkSpec& spec, const ParamSet<float>& params,
                                    const Tensor<float>& obs, std::span<const std::size_t> actions,
                                    std::span<const double> targets,
                                    const augbox::Combination& gamma,
                                    const augbox::DistractorBank& bank, std::uint64_t seed,
                                    augbox::OverlayForm form = augbox::OverlayForm::Convex);

struct Aggregated {
  gradkit::FlatGradient direction;
  gradkit::StepDiagnostics diagnostics;
};

/// Reduces a gradient set per `mode`. Diagnostics always describe the raw
/// set (norms, cosines, conflict fraction under `agreement`); `weights` and
/// `gamma_sampled` record what was actually applied (γ = 1 when no surgery).
/// One damping draw is taken from `rng` for every mode, so streams stay
/// aligned across modes.
Aggregated aggregate(const gradkit::GradientSet& grads, Aggregation mode,
                     gradkit::AgreementMode agreement, const gradkit::DampingDistribution& damping,
                     Rng& rng);

/// Copies params into target_params when `updates` is a multiple of
/// `period`. Returns whether a copy happened.
bool sync_target(const ParamSet<float>& params, ParamSet<float>& target_params, std::uint64_t updates,
                 std::uint64_t period);

/// Samples from softmax(q / temperature); temperature 0 is argmax with the
/// lowest index winning ties. Always consumes exactly one uniform draw.
std::size_t select_from_q(std::span<const double> q, double temperature, Rng& rng);

std::size_t select_action(const QNetworkSpec& spec, const ParamSet<float>& params,
                          const ImageObservation& obs, double temperature, Rng& rng);

/// Linear anneal from temperature_start to temperature_end.
double temperature_at(const TrainConfig& config, std::uint64_t step);

struct TrainResult {
  ParamSet<float> params;
  ParamSet<float> target_params;
  OptimizerState optimizer_state;
  MetricsLog log;
  std::uint64_t updates = 0;
  // Observations passed through a non-identity augmentation. Successor
  // observations never are, so this equals updates × batch × (|Γ| - 1).
  std::uint64_t augmented_samples = 0;
};

struct TrainHooks {
  // Called after the update at `step` when `step + 1` is a multiple of
  // checkpoint_every (0 disables).
  std::uint64_t checkpoint_every = 0;
  std::function<void(std::uint64_t step, const ParamSet<float>&, const OptimizerState&)> on_checkpoint;
  // Optional per-step observer, e.g. for progress output.
  std::function<void(const StepRecord&)> on_step;
};

/// Runs the act / store / update loop. Throws ConfigError before any step
/// when the configuration is invalid.
TrainResult train(const TrainConfig& config, const TrainHooks& hooks = {});

struct EvalReport {
  pixelworld::EnvVariant variant = pixelworld::EnvVariant::Train;
  std::uint64_t seed = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
  std::vector<double> returns;

  std::string to_json() const;
};

/// Greedy (temperature 0) rollouts without augmentation. Episode e uses
/// environment seed derive_seed(seed, e), so layouts match across variants.
EvalReport evaluate(const QNetworkSpec& spec, const ParamSet<float>& params,
                    pixelworld::EnvVariant variant, std::size_t episodes, std::uint64_t seed);

}  // namespace cg2a::agent
