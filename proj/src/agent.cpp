#include "cg2a/agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <json.hpp>

#include "cg2a/errors.hpp"
#include "cg2a/kernels.hpp"

namespace cg2a::agent {

namespace {

struct ModeName {
  Aggregation mode;
  const char* name;
};

constexpr ModeName kModeNames[] = {
    {Aggregation::CG2A, "cg2a"},       {Aggregation::NaiveAverage, "naive_average"},
    {Aggregation::GASOnly, "gas_only"}, {Aggregation::SGSOnly, "sgs_only"},
    {Aggregation::SingleAug, "single_aug"}, {Aggregation::NoAug, "no_aug"},
};

Tensor<float> single_batch(const ImageObservation& obs) {
  Shape s{1};
  s.insert(s.end(), obs.shape().begin(), obs.shape().end());
  return obs.reshaped(std::move(s));
}

}  // namespace

std::string_view to_string(Aggregation mode) {
  for (const auto& m : kModeNames)
    if (m.mode == mode) return m.name;
  return "cg2a";
}

Aggregation parse_aggregation(std::string_view text) {
  for (const auto& m : kModeNames)
    if (text == m.name) return m.mode;
  throw StructuralError("unknown aggregation '" + std::string(text) +
                        "' (expected cg2a, naive_average, gas_only, sgs_only, single_aug or no_aug)");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
  if (!(discount >= 0.0 && discount < 1.0)) throw ConfigError("discount", "must lie in [0, 1)");
  if (!(optimizer.learning_rate > 0.0) || !std::isfinite(optimizer.learning_rate)) {
    throw ConfigError("learning_rate", "must be positive");
  }
  if (!(optimizer.adam_beta1 >= 0.0 && optimizer.adam_beta1 < 1.0)) throw ConfigError("adam_beta1", "must lie in [0, 1)");
  if (!(optimizer.adam_beta2 >= 0.0 && optimizer.adam_beta2 < 1.0)) throw ConfigError("adam_beta2", "must lie in [0, 1)");
  if (!(optimizer.adam_epsilon > 0.0)) throw ConfigError("adam_epsilon", "must be positive");
  if (target_sync_period == 0) throw ConfigError("target_sync_period", "must be positive");
  if (buffer_capacity == 0) throw ConfigError("buffer_capacity", "must be positive");
  if (!(temperature_start >= 0.0) || !std::isfinite(temperature_start)) throw ConfigError("temperature_start", "must be non-negative");
  if (!(temperature_end >= 0.0) || !std::isfinite(temperature_end)) throw ConfigError("temperature_end", "must be non-negative");
  if (!(temperature_anneal_fraction >= 0.0 && temperature_anneal_fraction <= 1.0)) {
    throw ConfigError("temperature_anneal_fraction", "must lie in [0, 1]");
  }
  if (bank_size == 0) throw ConfigError("bank_size", "must be positive");
  try {
    augbox::make_combination(augmentations);
  } catch (const StructuralError& e) {
    throw ConfigError("augmentations", e.what());
  }
  try {
    single_aug.validate();
  } catch (const StructuralError& e) {
    throw ConfigError("single_aug", e.what());
  }
  if (single_aug.kind == augbox::AugKind::Identity) throw ConfigError("single_aug", "must not be identity");
  try {
    network.validate();
  } catch (const StructuralError& e) {
    throw ConfigError("network", e.what());
  }
  if (network.in_channels != pixelworld::kFrames * augbox::kColorChannels ||
      network.height != pixelworld::kPixels || network.width != pixelworld::kPixels) {
    throw ConfigError("network", "input must be " + std::to_string(pixelworld::kFrames * 3) + "x" +
                                     std::to_string(pixelworld::kPixels) + "x" +
                                     std::to_string(pixelworld::kPixels));
  }
  if (network.actions != pixelworld::kActions) throw ConfigError("network", "output must have 4 actions");
}

augbox::Combination TrainConfig::combination() const {
  switch (aggregation) {
    case Aggregation::NoAug: {
      const augbox::AugmentationSpec id[] = {augbox::AugmentationSpec::identity()};
      return augbox::make_combination(id);
    }
    case Aggregation::SingleAug: {
      const augbox::AugmentationSpec one[] = {single_aug};
      return augbox::make_combination(one);
    }
    default:
      return augbox::make_combination(augmentations);
  }
}

template <typename T>
std::vector<double> td_targets(const QNetworkSpec& spec, const ParamSet<T>& target_params,
                               const Tensor<T>& next_obs, std::span<const double> rewards,
                               std::span<const std::uint8_t> done, double discount) {
  const std::size_t batch = rewards.size();
  if (batch == 0 || done.size() != batch || next_obs.rank() == 0 || next_obs.dim(0) != batch) {
    throw StructuralError("td_targets: batch fields disagree in length");
  }
  const auto q = q_values(spec, target_params, next_obs);
  const std::size_t actions = q.dim(1);
  std::vector<double> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < actions; ++a) best = std::max(best, static_cast<double>(q[b * actions + a]));
    out[b] = done[b] ? rewards[b] : rewards[b] + discount * best;
  }
  return out;
}

template std::vector<double> td_targets<float>(const QNetworkSpec&, const ParamSet<float>&, const Tensor<float>&,
                                               std::span<const double>, std::span<const std::uint8_t>, double);
template std::vector<double> td_targets<double>(const QNetworkSpec&, const ParamSet<double>&, const Tensor<double>&,
                                                std::span<const double>, std::span<const std::uint8_t>, double);

CriticGradients critic_gradient_set(const QNetworkSpec& spec, const ParamSet<float>& params,
                                    const Tensor<float>& obs, std::span<const std::size_t> actions,
                                    std::span<const double> targets,
                                    const augbox::Combination& gamma,
                                    const augbox::DistractorBank& bank, std::uint64_t seed,
                                    augbox::OverlayForm form) {
  const std::vector<float> target_f(targets.begin(), targets.end());
  std::vector<gradkit::FlatGradient> grads;
  std::vector<double> losses;
  std::size_t augmented = 0;
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    const auto& spec_i = gamma[i];
    const bool identity = spec_i.kind == augbox::AugKind::Identity;
    auto pass = identity ? q_forward(spec, params, obs)
                         : q_forward(spec, params, augbox::apply_batch(obs, spec_i, bank, derive_seed(seed, i), form));
    if (!identity) augmented += obs.dim(0);
    const Var loss = critic_loss<float>(pass, actions, target_f);
    losses.push_back(static_cast<double>(pass.tape.value(loss)[0]));
    grads.push_back(backward(pass, loss));
  }
  return {gradkit::GradientSet(std::move(grads)), std::move(losses), augmented};
}

Aggregated aggregate(const gradkit::GradientSet& grads, Aggregation mode,
                     gradkit::AgreementMode agreement, const gradkit::DampingDistribution& damping,
                     Rng& rng) {
  if (mode == Aggregation::CG2A) {
    auto step = gradkit::cg2a_step(grads, rng, agreement, damping);
    return {std::move(step.combined), std::move(step.diagnostics)};
  }

  const std::size_t n = grads.count();
  Aggregated out;
  auto& diag = out.diagnostics;
  const auto gram = gradkit::gram_matrix(grads);
  gradkit::fill_geometry(gram, n, diag);
  const auto mask = gradkit::conflict_mask(grads, agreement);
  diag.conflict_fraction = mask.conflict_fraction();
  const double gamma = gradkit::sample_damping(rng, damping);

  const bool surgery = mode == Aggregation::SGSOnly;
  diag.gamma_sampled = surgery ? gamma : 1.0;
  diag.weights = mode == Aggregation::GASOnly ? gradkit::gas_weights_from_gram(gram, n)
                                              : gradkit::WeightVector::uniform(n, false);
  diag.negative_weights = static_cast<std::size_t>(
      std::count_if(diag.weights.w.begin(), diag.weights.w.end(), [](double w) { return w < 0; }));
  out.direction = surgery ? gradkit::sgs_combine(grads, mask, gamma, diag.weights)
                          : gradkit::weighted_combine(grads, diag.weights);
  return out;
}

bool sync_target(const ParamSet<float>& params, ParamSet<float>& target_params, std::uint64_t updates,
                 std::uint64_t period) {
  if (period == 0 || updates % period != 0) return false;
  target_params = params;
  return true;
}

std::size_t select_from_q(std::span<const double> q, double temperature, Rng& rng) {
  if (q.empty()) throw StructuralError("select_from_q: no actions");
  if (!(temperature >= 0.0)) throw StructuralError("select_from_q: temperature must be non-negative");
  const double u = rng.uniform();
  const auto best = static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
  if (temperature == 0.0) return best;
  std::vector<double> p(q.size());
  double total = 0.0;
  for (std::size_t a = 0; a < q.size(); ++a) {
    p[a] = std::exp((q[a] - q[best]) / temperature);
    total += p[a];
  }
  double acc = 0.0;
  for (std::size_t a = 0; a < q.size(); ++a) {
    acc += p[a] / total;
    if (u < acc) return a;
  }
  return q.size() - 1;
}

std::size_t select_action(const QNetworkSpec& spec, const ParamSet<float>& params,
                          const ImageObservation& obs, double temperature, Rng& rng) {
  const auto q = q_values(spec, params, single_batch(obs));
  const std::vector<double> qd(q.data().begin(), q.data().end());
  return select_from_q(qd, temperature, rng);
}

double temperature_at(const TrainConfig& config, std::uint64_t step) {
  const double span = config.temperature_anneal_fraction * static_cast<double>(config.total_steps);
  if (span <= 0.0 || static_cast<double>(step) >= span) return config.temperature_end;
  const double t = static_cast<double>(step) / span;
  return config.temperature_start + (config.temperature_end - config.temperature_start) * t;
}

TrainResult train(const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  kernels::retain_freed_memory();
  const auto gamma = config.combination();
  const auto names = gamma.names();
  const auto& net = config.network;
  const augbox::DistractorBank bank(config.bank_seed, config.bank_size, net.height, net.width);

  TrainResult result;
  result.params = init_params<float>(net, derive_seed(config.seed, kInitStream));
  result.target_params = result.params;
  if (config.total_steps == 0) return result;

  Rng act_rng(derive_seed(config.seed, kActStream));
  Rng replay_rng(derive_seed(config.seed, kReplayStream));
  Rng damping_rng(derive_seed(config.seed, kDampingStream));
  ReplayBuffer buffer(config.buffer_capacity, {net.in_channels, net.height, net.width});

  std::uint64_t episode = 0;
  auto [state, obs] = pixelworld::reset(derive_seed(config.seed, kEpisodeStream, episode), config.train_variant);
  double episode_return = 0.0;

  for (std::uint64_t t = 0; t < config.total_steps; ++t) {
    const std::size_t action = select_action(net, result.params, obs, temperature_at(config, t), act_rng);
    auto [next_state, sr] = pixelworld::step(state, static_cast<pixelworld::Action>(action));
    buffer.push({obs, action, sr.reward, sr.observation, sr.done});
    episode_return += sr.reward;

    StepRecord record;
    record.step = t;
    if (sr.done) {
      record.episode_return = episode_return;
      episode_return = 0.0;
      ++episode;
      std::tie(state, obs) = pixelworld::reset(derive_seed(config.seed, kEpisodeStream, episode), config.train_variant);
    } else {
      state = std::move(next_state);
      obs = std::move(sr.observation);
    }

    if (t >= config.warmup_steps) {
      const auto batch = buffer.sample(replay_rng, config.batch_size);
      const auto targets = td_targets(net, result.target_params, batch.next_obs, batch.rewards, batch.done,
                                      config.discount);
      auto critic = critic_gradient_set(net, result.params, batch.obs, batch.actions, targets, gamma, bank,
                                        derive_seed(config.seed, kAugmentStream, result.updates),
                                        config.overlay_form);
      auto agg = aggregate(critic.grads, config.aggregation, config.agreement, config.damping, damping_rng);
      optimizer_update(result.params, agg.direction, config.optimizer, result.optimizer_state);
      ++result.updates;
      result.augmented_samples += critic.augmented_samples;
      sync_target(result.params, result.target_params, result.updates, config.target_sync_period);
      record.update = UpdateRecord{names, std::move(critic.losses), std::move(agg.diagnostics)};
    }

    if (hooks.on_step) hooks.on_step(record);
    result.log.append(std::move(record));
    if (hooks.checkpoint_every && hooks.on_checkpoint && (t + 1) % hooks.checkpoint_every == 0) {
      hooks.on_checkpoint(t, result.params, result.optimizer_state);
    }
  }
  return result;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["variant"] = std::string(pixelworld::to_string(variant));
  j["seed"] = seed;
  j["episodes"] = returns.size();
  j["mean_return"] = mean_return;
  j["std_return"] = std_return;
  j["returns"] = returns;
  return j.dump(2) + "\n";
}

EvalReport evaluate(const QNetworkSpec& spec, const ParamSet<float>& params,
                    pixelworld::EnvVariant variant, std::size_t episodes, std::uint64_t seed) {
  if (episodes == 0) throw StructuralError("evaluate: need at least one episode");
  EvalReport report;
  report.variant = variant;
  report.seed = seed;
  Rng unused(0);
  for (std::size_t e = 0; e < episodes; ++e) {
    auto [state, obs] = pixelworld::reset(derive_seed(seed, e), variant);
    double total = 0.0;
    while (!state.done) {
      const std::size_t a = select_action(spec, params, obs, 0.0, unused);
      auto [next, sr] = pixelworld::step(state, static_cast<pixelworld::Action>(a));
      total += sr.reward;
      state = std::move(next);
      obs = std::move(sr.observation);
    }
    report.returns.push_back(total);
  }
  double mean = 0.0;
  for (double r : report.returns) mean += r;
  mean /= double(episodes);
  double var = 0.0;
  for (double r : report.returns) var += (r - mean) * (r - mean);
  report.mean_return = mean;
  report.std_return = std::sqrt(var / double(episodes));
  return report;
}

}  // namespace cg2a::agent
