#pragma once

// Command-line orchestration: train, eval, analyze and grad-demo.
//
// Exit codes:
//   0  success
//   1  usage error (bad flags or arguments)
//   2  configuration error
//   3  I/O error (missing or corrupt files)
//   4  numeric error (non-finite values)

#include <filesystem>
#include <iosfwd>
#include <string>

#include "cg2a/agent.hpp"
#include "cg2a/config.hpp"

namespace cg2a::harness {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kConfig = 2,
  kIo = 3,
  kNumeric = 4,
};

/// CG2A_OUTPUT_ROOT when set, otherwise the working directory.
std::filesystem::path output_root();
/// config.output_dir, resolved against output_root() when relative.
std::filesystem::path resolve_output_dir(const RunConfig& config);

struct TrainArtifacts {
  agent::TrainResult result;
  std::vector<agent::EvalReport> evals;
};

/// Full train command: echoes the config, trains, writes metrics.jsonl,
/// checkpoints/, eval_<variant>.json and diagnostics/ under `dir`.
TrainArtifacts run_training(const RunConfig& config, const std::filesystem::path& dir, std::ostream& progress);

/// Text report for a random gradient set with n augmentations (n + 1
/// gradients) of length dim.
std::string grad_demo(std::uint64_t seed, std::size_t n, std::size_t dim, gradkit::AgreementMode mode);

/// Entry point; argv[0] is the program name.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cg2a::harness
