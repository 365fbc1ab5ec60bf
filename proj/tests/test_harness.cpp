#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cg2a/checkpoint.hpp"
#include "cg2a/config.hpp"
#include "cg2a/diagnostics.hpp"
#include "cg2a/errors.hpp"
#include "cg2a/harness.hpp"
#include "support.hpp"

using namespace cg2a;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string tiny_config_text(const fs::path& out_dir) {
  return "# tiny run\n"
         "total_steps = 150\n"
         "warmup_steps = 50\n"
         "batch_size = 4\n"
         "buffer_capacity = 300\n"
         "target_sync_period = 20\n"
         "bank_size = 8\n"
         "network = in=9x48x48;conv=4k5s4;dense=16;out=4;act=relu\n"
         "eval_episodes = 3\n"
         "diagnostics_steps = 80\n"
         "diagnostics_stride = 20\n"
         "checkpoint_every = 50\n"
         "output_dir = " + out_dir.string() + "\n";
}

struct Cli {
  int code = 0;
  std::string out, err;
};

Cli run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cg2a");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Cli r;
  r.code = harness::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

void expect_field(const std::string& text, const std::string& field) {
  try {
    parse_config_text(text);
    FAIL("expected a ConfigError for " << field);
  } catch (const ConfigError& e) {
    CHECK(e.field() == field);
  }
}

}  // namespace

TEST_CASE("empty config gives every default") {
  const auto c = parse_config_text("");
  CHECK(c == RunConfig{});
  CHECK(c.train.damping.alpha() == 0.22);
  CHECK(c.train.damping.beta() == 0.28);
  CHECK(c.train.augmentations == augbox::default_augmentations());
  CHECK(c.train.batch_size == 64);
  CHECK(c.train.optimizer.learning_rate == 1e-3);
}

TEST_CASE("config round-trips through its echo") {
  auto c = parse_config_text(
      "total_steps = 1234\ndiscount = 0.95\naugmentations = shift:4, cutout:0.3, mixup:0.5\n"
      "agreement = strict\ndamping_alpha = 0.1\ndamping_beta = 0.3\naggregation = gas_only\n"
      "optimizer = adam\nlearning_rate = 0.000123456789\noverlay_form = literal\n"
      "eval_variants = texture, dynamic\ndump_frames = true\n");
  CHECK(c.train.total_steps == 1234);
  CHECK(c.train.agreement == gradkit::AgreementMode::StrictPaper);
  CHECK(c.train.aggregation == agent::Aggregation::GASOnly);
  CHECK(c.train.optimizer.learning_rate == 0.000123456789);
  CHECK(parse_config_text(echo_config(c)) == c);
  CHECK(parse_config_text(echo_config(RunConfig{})) == RunConfig{});
  CHECK(echo_config(parse_config_text(echo_config(c))) == echo_config(c));
}

TEST_CASE("config errors name the field") {
  expect_field("damping_alpha = 0.5\ndamping_beta = 0.3\n", "damping_alpha/damping_beta");
  expect_field("colour = red\n", "colour");
  expect_field("batch_size = 4\nbatch_size = 8\n", "batch_size");
  expect_field("batch_size = lots\n", "batch_size");
  expect_field("batch_size = 0\n", "batch_size");
  expect_field("discount = 1.5\n", "discount");
  expect_field("aggregation = pcgrad\n", "aggregation");
  expect_field("augmentations = blur:3\n", "augmentations");
  expect_field("version = 2\n", "version");
  expect_field("eval_episodes = 0\n", "eval_episodes");
  expect_field("network = in=9x48x48;conv=16k3s2;out=3\n", "network");
  expect_field("total_steps\n", "line 1");
  CHECK_THROWS_AS(parse_config("/nonexistent/cg2a.txt"), IoError);
}

TEST_CASE("checkpoint round-trip and corruption detection") {
  testing::TempDir dir("ckpt");
  Checkpoint c;
  c.spec = QNetworkSpec::parse("in=9x48x48;conv=4k5s4;dense=16;out=4;act=relu");
  c.params = init_params<float>(c.spec, 4);
  c.train_step = 777;
  c.optimizer = OptimizerKind::Adam;
  c.optimizer_state.step = 3;
  c.optimizer_state.first_moment.assign(c.spec.param_count(), 0.25);
  c.optimizer_state.second_moment.assign(c.spec.param_count(), 1e-9);
  const auto path = dir.path() / "a.ckpt";
  save_checkpoint(path, c);
  const auto back = load_checkpoint(path);
  CHECK(back.spec == c.spec);
  CHECK(back.params == c.params);
  CHECK(back.train_step == 777);
  CHECK(back.optimizer == OptimizerKind::Adam);
  CHECK(back.optimizer_state == c.optimizer_state);

  auto bytes = slurp(path);
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  spit(dir.path() / "flipped.ckpt", flipped);
  CHECK_THROWS_AS(load_checkpoint(dir.path() / "flipped.ckpt"), IoError);
  spit(dir.path() / "short.ckpt", bytes.substr(0, bytes.size() - 9));
  CHECK_THROWS_AS(load_checkpoint(dir.path() / "short.ckpt"), IoError);
  auto magic = bytes;
  magic[0] = 'X';
  spit(dir.path() / "magic.ckpt", magic);
  CHECK_THROWS_AS(load_checkpoint(dir.path() / "magic.ckpt"), IoError);
  CHECK_THROWS_AS(load_checkpoint(dir.path() / "none.ckpt"), IoError);
}

TEST_CASE("grad-demo is deterministic") {
  const auto a = run_cli({"grad-demo", "--seed", "1", "--n", "2", "--dim", "4"});
  const auto b = run_cli({"grad-demo", "--seed", "1", "--n", "2", "--dim", "4"});
  CHECK(a.code == harness::kOk);
  CHECK(a.out == b.out);
  CHECK(a.out.find("g2 =") != std::string::npos);
  CHECK(a.out.find("g3 =") == std::string::npos);
  CHECK(a.out.find("mode=symmetric") != std::string::npos);
  const auto strict = run_cli({"grad-demo", "--seed", "1", "--n", "2", "--dim", "4", "--mode", "strict"});
  CHECK(strict.out.find("mode=strict") != std::string::npos);
  CHECK(run_cli({"grad-demo", "--seed", "2", "--n", "2", "--dim", "4"}).out != a.out);
}

TEST_CASE("usage errors") {
  CHECK(run_cli({}).code == harness::kUsage);
  CHECK(run_cli({"fly"}).code == harness::kUsage);
  CHECK(run_cli({"grad-demo", "--mode", "loose"}).code == harness::kUsage);
  CHECK(run_cli({"eval"}).code == harness::kUsage);
  CHECK(run_cli({"--help"}).code == harness::kOk);
}

TEST_CASE("train, eval and analyze end to end") {
  testing::TempDir dir("e2e");
  const auto run_dir = dir.path() / "run";
  spit(dir.path() / "cfg.txt", tiny_config_text(run_dir));
  const auto train = run_cli({"train", "--config", (dir.path() / "cfg.txt").string()});
  REQUIRE(train.code == harness::kOk);
  for (const char* f : {"config.txt", "metrics.jsonl", "eval_train.json", "eval_random_colors.json",
                        "checkpoints/final.ckpt", "checkpoints/step_000000050.ckpt", "checkpoints/step_000000150.ckpt",
                        "diagnostics/magnitudes.csv", "diagnostics/cosines.csv", "diagnostics/conflict.csv"})
    CHECK_MESSAGE(fs::exists(run_dir / f), f);

  // The echoed config reproduces the log byte for byte.
  const auto echoed = parse_config(run_dir / "config.txt");
  CHECK(echoed == parse_config(dir.path() / "cfg.txt"));
  const auto again = run_cli({"train", "--config", (run_dir / "config.txt").string(), "--output",
                              (dir.path() / "again").string()});
  REQUIRE(again.code == harness::kOk);
  CHECK(slurp(dir.path() / "again" / "metrics.jsonl") == slurp(run_dir / "metrics.jsonl"));

  // analyze reproduces the in-run diagnostics.
  const auto log = MetricsLog::load(run_dir / "metrics.jsonl");
  const auto w = diagnostics::Window::last(log, 80);
  const auto analyze = run_cli({"analyze", "--log", (run_dir / "metrics.jsonl").string(), "--window",
                                std::to_string(w.begin) + ":" + std::to_string(w.end), "--stride", "20"});
  REQUIRE(analyze.code == harness::kOk);
  for (const char* f : {"magnitudes.csv", "cosines.csv", "conflict.csv"})
    CHECK(slurp(run_dir / "analysis" / f) == slurp(run_dir / "diagnostics" / f));
  CHECK(run_cli({"analyze", "--log", (run_dir / "metrics.jsonl").string(), "--window", "900:1000"}).code != 0);

  // eval on the final checkpoint.
  const auto eval = run_cli({"eval", "--checkpoint", (run_dir / "checkpoints/final.ckpt").string(), "--variant",
                             "texture", "--episodes", "4", "--seed", "5"});
  REQUIRE(eval.code == harness::kOk);
  const auto report = nlohmann::json::parse(slurp(run_dir / "checkpoints" / "eval_texture_seed5.json"));
  CHECK(report["variant"] == "texture");
  CHECK(report["returns"].size() == 4);
  CHECK(report["mean_return"].get<double>() >= -1.0 - 1e-9);
  CHECK(report["mean_return"].get<double>() <= 0.99);
  CHECK(run_cli({"eval", "--checkpoint", (dir.path() / "missing.ckpt").string()}).code == harness::kIo);
}

TEST_CASE("relative output dirs resolve against the output root") {
  testing::TempDir dir("root");
  ::setenv("CG2A_OUTPUT_ROOT", dir.path().c_str(), 1);
  RunConfig c;
  c.output_dir = "nested/run";
  CHECK(harness::resolve_output_dir(c) == dir.path() / "nested/run");
  c.output_dir = "/abs/run";
  CHECK(harness::resolve_output_dir(c) == fs::path("/abs/run"));
  ::unsetenv("CG2A_OUTPUT_ROOT");
}

TEST_CASE("the installed binary reports stable exit codes") {
  const char* cli = std::getenv("CG2A_CLI");
  if (!cli) return;
  testing::TempDir dir("bin");
  const auto quiet = " > " + (dir.path() / "out.txt").string() + " 2>&1";
  const auto code = [&](const std::string& args) {
    const int status = std::system((std::string(cli) + " " + args + quiet).c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  CHECK(code("grad-demo --seed 3 --n 1 --dim 5") == 0);
  CHECK(code("nonsense") == 1);
  spit(dir.path() / "bad.txt", "damping_alpha = 0.5\ndamping_beta = 0.3\n");
  CHECK(code("train --config " + (dir.path() / "bad.txt").string()) == 2);
  CHECK(code("train --config " + (dir.path() / "absent.txt").string()) == 3);
  spit(dir.path() / "log.jsonl", "{\"step\": 0, \"episode_return\": 1e999}\n");
  CHECK(code("analyze --log " + (dir.path() / "log.jsonl").string() + " --window 0:1") != 0);
}
