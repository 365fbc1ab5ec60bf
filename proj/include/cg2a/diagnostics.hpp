#pragma once

// Gradient-level statistics over a MetricsLog: how unevenly gradient
// magnitudes are spread across augmentations, how often pairs of gradients
// point apart, and how much of the gradient is masked as conflicting.
//
// A window [begin, end) selects update records by step index. Every function
// throws StructuralError when the window holds no update record or when the
// records disagree on the gradient count.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cg2a/metrics.hpp"

namespace cg2a::diagnostics {

struct Window {
  std::uint64_t begin = 0;
  std::uint64_t end = 0;  // exclusive

  /// Parses "A:B".
  static Window parse(const std::string& text);
  /// The last `steps` steps of the log (all of it when shorter).
  static Window last(const MetricsLog& log, std::uint64_t steps);
};

struct MagnitudeProfile {
  std::vector<std::string> augmentations;
  // Mean over the window of each gradient's share of the per-step norm sum.
  std::vector<double> mean_normalized_magnitude;
  // max / min of the profile (inf when the minimum is zero).
  double dominance = 0.0;
};

struct PairCosine {
  std::size_t i = 0, j = 0;
  double mean_cosine = 0.0;
  double negative_fraction = 0.0;
};

struct CosineProfile {
  std::vector<PairCosine> pairs;  // i < j, row-major order
  // Share of all (step, pair) cosine entries that are negative.
  double negative_fraction = 0.0;
};

struct ConflictRow {
  std::uint64_t window_start = 0, window_end = 0;
  double mean_conflict_fraction = 0.0;
};

MagnitudeProfile magnitude_profile(const MetricsLog& log, Window window);
CosineProfile cosine_profile(const MetricsLog& log, Window window);
double conflict_rate(const MetricsLog& log, Window window);

/// conflict_rate over consecutive sub-windows of width `stride` (the whole
/// window when stride is 0); sub-windows without updates are skipped.
std::vector<ConflictRow> conflict_series(const MetricsLog& log, Window window, std::uint64_t stride);

std::string magnitudes_csv(const MagnitudeProfile& p);
std::string cosines_csv(const CosineProfile& p);
std::string conflict_csv(const std::vector<ConflictRow>& rows);

/// Writes magnitudes.csv, cosines.csv and conflict.csv into `dir`.
void write_reports(const MetricsLog& log, Window window, std::uint64_t stride,
                   const std::filesystem::path& dir);

}  // namespace cg2a::diagnostics
