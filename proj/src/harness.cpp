#include "cg2a/harness.hpp"

#include <charconv>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cg2a/checkpoint.hpp"
#include "cg2a/diagnostics.hpp"
#include "cg2a/errors.hpp"

namespace cg2a::harness {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string step_name(std::uint64_t steps) {
  std::string digits = std::to_string(steps);
  if (digits.size() < 9) digits.insert(0, 9 - digits.size(), '0');
  return "step_" + digits + ".ckpt";
}

Checkpoint make_checkpoint(const RunConfig& config, const ParamSet<float>& params, std::uint64_t steps,
                           const OptimizerState& state) {
  return {config.train.network, params, steps, config.train.optimizer.kind, state};
}

bool has_update(const MetricsLog& log, diagnostics::Window w) {
  for (const auto& r : log.records())
    if (r.step >= w.begin && r.step < w.end && r.update) return true;
  return false;
}

int train_command(const std::string& config_path, const std::string& output_override, std::ostream& out) {
  auto config = parse_config(config_path);
  if (!output_override.empty()) config.output_dir = output_override;
  const fs::path dir = resolve_output_dir(config);
  run_training(config, dir, out);
  out << "wrote " << dir.string() << "\n";
  return kOk;
}

int eval_command(const std::string& ckpt_path, const std::string& variant_name, std::size_t episodes,
                 std::uint64_t seed, const std::string& out_path, std::ostream& out) {
  const auto variant = pixelworld::parse_variant(variant_name);
  const auto ckpt = load_checkpoint(ckpt_path);
  const auto report = agent::evaluate(ckpt.spec, ckpt.params, variant, episodes, seed);
  const fs::path target = out_path.empty()
                              ? fs::path(ckpt_path).parent_path() /
                                    ("eval_" + std::string(pixelworld::to_string(variant)) + "_seed" +
                                     std::to_string(seed) + ".json")
                              : fs::path(out_path);
  write_file_atomic(target, report.to_json());
  out << pixelworld::to_string(variant) << " mean_return=" << fmt(report.mean_return)
      << " std_return=" << fmt(report.std_return) << " episodes=" << episodes << "\n";
  out << "wrote " << target.string() << "\n";
  return kOk;
}

int analyze_command(const std::string& log_path, const std::string& window_text, std::uint64_t stride,
                    const std::string& out_dir, std::ostream& out) {
  const auto log = MetricsLog::load(log_path);
  const auto window = diagnostics::Window::parse(window_text);
  const fs::path dir = out_dir.empty() ? fs::path(log_path).parent_path() / "analysis" : fs::path(out_dir);
  diagnostics::write_reports(log, window, stride, dir);
  const auto mags = diagnostics::magnitude_profile(log, window);
  const auto cos = diagnostics::cosine_profile(log, window);
  out << "dominance=" << fmt(mags.dominance) << " negative_cosine_fraction=" << fmt(cos.negative_fraction)
      << " conflict_rate=" << fmt(diagnostics::conflict_rate(log, window)) << "\n";
  out << "wrote " << dir.string() << "\n";
  return kOk;
}

}  // namespace

fs::path output_root() {
  if (const char* env = std::getenv("CG2A_OUTPUT_ROOT"); env && *env) return fs::path(env);
  return fs::current_path();
}

fs::path resolve_output_dir(const RunConfig& config) {
  const fs::path p(config.output_dir);
  return p.is_absolute() ? p : output_root() / p;
}

TrainArtifacts run_training(const RunConfig& config, const fs::path& dir, std::ostream& progress) {
  config.validate();
  fs::create_directories(dir / "checkpoints");
  write_file_atomic(dir / "config.txt", echo_config(config));

  if (config.dump_frames) {
    for (auto v : config.eval_variants) {
      const auto [unused, o] = pixelworld::reset(config.train.seed, v);
      pixelworld::dump_frame_ppm(o, (dir / ("frame_" + std::string(pixelworld::to_string(v)) + ".ppm")).string());
    }
  }

  agent::TrainHooks hooks;
  hooks.checkpoint_every = config.checkpoint_every;
  hooks.on_checkpoint = [&](std::uint64_t step, const ParamSet<float>& params, const OptimizerState& state) {
    save_checkpoint(dir / "checkpoints" / step_name(step + 1), make_checkpoint(config, params, step + 1, state));
  };
  double recent_return = 0.0;
  std::size_t recent_episodes = 0;
  hooks.on_step = [&](const StepRecord& r) {
    if (r.episode_return) {
      recent_return += *r.episode_return;
      ++recent_episodes;
    }
    if ((r.step + 1) % 1000 == 0) {
      progress << "step " << r.step + 1 << "/" << config.train.total_steps;
      if (recent_episodes) progress << " mean_episode_return=" << fmt(recent_return / double(recent_episodes));
      progress << "\n" << std::flush;
      recent_return = 0.0;
      recent_episodes = 0;
    }
  };

  TrainArtifacts art;
  art.result = agent::train(config.train, hooks);
  auto& result = art.result;
  save_checkpoint(dir / "checkpoints" / "final.ckpt",
                  make_checkpoint(config, result.params, config.train.total_steps, result.optimizer_state));
  result.log.save(dir / "metrics.jsonl");

  const auto window = diagnostics::Window::last(result.log, config.diagnostics_steps);
  if (has_update(result.log, window)) {
    diagnostics::write_reports(result.log, window, config.diagnostics_stride, dir / "diagnostics");
  }
  for (auto v : config.eval_variants) {
    auto report = agent::evaluate(config.train.network, result.params, v, config.eval_episodes, config.eval_seed);
    write_file_atomic(dir / ("eval_" + std::string(pixelworld::to_string(v)) + ".json"), report.to_json());
    progress << "eval " << pixelworld::to_string(v) << " mean_return=" << fmt(report.mean_return) << "\n";
    art.evals.push_back(std::move(report));
  }
  return art;
}

std::string grad_demo(std::uint64_t seed, std::size_t n, std::size_t dim, gradkit::AgreementMode mode) {
  if (dim == 0) throw StructuralError("grad-demo: --dim must be positive");
  Rng rng(seed);
  std::vector<gradkit::FlatGradient> raw(n + 1, gradkit::FlatGradient(dim));
  for (auto& g : raw)
    for (auto& x : g) x = rng.uniform(-1.0, 1.0);
  const gradkit::GradientSet grads(raw);
  const auto mask = gradkit::conflict_mask(grads, mode);
  const auto step = gradkit::cg2a_step(grads, rng, mode);

  std::ostringstream out;
  out << "seed=" << seed << " gradients=" << n + 1 << " dim=" << dim << " mode=" << gradkit::to_string(mode) << "\n";
  for (std::size_t i = 0; i < grads.count(); ++i) {
    out << "g" << i << " =";
    for (double x : grads[i]) out << ' ' << fmt(x);
    out << "\n";
  }
  out << "weights =";
  for (double w : step.diagnostics.weights.w) out << ' ' << fmt(w);
  out << (step.diagnostics.weights.fallback_used ? " (uniform fallback)" : "") << "\n";
  out << "mask =";
  for (auto b : mask.bits) out << ' ' << (b ? '1' : '0');
  out << "\n";
  out << "conflicts=" << mask.conflicts << "/" << dim << " gamma=" << fmt(step.diagnostics.gamma_sampled) << "\n";
  out << "combined =";
  for (double x : step.combined) out << ' ' << fmt(x);
  out << "\n";
  return out.str();
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"cg2a: gradient-agreement augmentation for pixel Q-learning"};
  app.require_subcommand(1);

  std::string config_path, output_override;
  auto* train = app.add_subcommand("train", "Train an agent from a config file");
  train->add_option("--config", config_path, "Config file (key = value)")->required();
  train->add_option("--output", output_override, "Override output_dir");

  std::string ckpt_path, variant = "train", eval_out;
  std::size_t episodes = 100;
  std::uint64_t eval_seed = 1000;
  auto* eval = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  eval->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  eval->add_option("--variant", variant, "train, random_colors, texture or dynamic");
  eval->add_option("--episodes", episodes, "Number of episodes")->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_seed, "Evaluation seed");
  eval->add_option("--out", eval_out, "Report path (default: next to the checkpoint)");

  std::string log_path, window_text, analyze_out;
  std::uint64_t stride = 0;
  auto* analyze = app.add_subcommand("analyze", "Recompute diagnostics CSVs from a metrics log");
  analyze->add_option("--log", log_path, "metrics.jsonl")->required();
  analyze->add_option("--window", window_text, "Step window A:B (B exclusive)")->required();
  analyze->add_option("--stride", stride, "Conflict series stride (0: one row)");
  analyze->add_option("--out", analyze_out, "Output directory (default: <log dir>/analysis)");

  std::uint64_t demo_seed = 1;
  std::size_t demo_n = 2, demo_dim = 4;
  std::string demo_mode = "symmetric";
  auto* demo = app.add_subcommand("grad-demo", "Print a CG2A step on random gradients");
  demo->add_option("--seed", demo_seed, "Seed");
  demo->add_option("--n", demo_n, "Number of augmentations (n + 1 gradients)");
  demo->add_option("--dim", demo_dim, "Gradient length")->check(CLI::PositiveNumber);
  demo->add_option("--mode", demo_mode, "strict or symmetric")->check(CLI::IsMember({"strict", "symmetric"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return train_command(config_path, output_override, out);
    if (*eval) return eval_command(ckpt_path, variant, episodes, eval_seed, eval_out, out);
    if (*analyze) return analyze_command(log_path, window_text, stride, analyze_out, out);
    if (*demo) {
      out << grad_demo(demo_seed, demo_n, demo_dim, gradkit::parse_agreement_mode(demo_mode));
      return kOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const NumericInputError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace cg2a::harness
