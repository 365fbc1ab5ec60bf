#pragma once

// Per-step training record, persisted as JSON lines (one object per step).
//
//   {"step": 812, "losses": [...], "augmentations": [...], "weights": [...],
//    "fallback": false, "negative_weights": 0, "conflict_fraction": 0.41,
//    "gamma": 0.2471, "grad_norms": [...], "cosines": [[...], ...],
//    "episode_return": -0.37}
//
// Fields other than "step" are present only when the step performed an
// update ("losses" ... "cosines") or ended an episode ("episode_return").

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cg2a/gradkit.hpp"

namespace cg2a {

struct UpdateRecord {
  std::vector<std::string> augmentations;
  std::vector<double> losses;
  gradkit::StepDiagnostics diagnostics;

  std::size_t count() const noexcept { return diagnostics.per_grad_l2_norm.size(); }
  friend bool operator==(const UpdateRecord&, const UpdateRecord&) = default;
};

struct StepRecord {
  std::uint64_t step = 0;
  std::optional<UpdateRecord> update;
  std::optional<double> episode_return;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

class MetricsLog {
 public:
  /// Throws StructuralError unless record.step exceeds the last step.
  void append(StepRecord record);

  const std::vector<StepRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }

  std::string to_jsonl() const;
  /// Throws IoError on malformed lines, StructuralError on out-of-order steps.
  static MetricsLog from_jsonl(const std::string& text);

  void save(const std::filesystem::path& path) const;
  static MetricsLog load(const std::filesystem::path& path);

  friend bool operator==(const MetricsLog&, const MetricsLog&) = default;

 private:
  std::vector<StepRecord> records_;
};

}  // namespace cg2a
