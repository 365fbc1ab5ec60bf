#include "cg2a/diagnostics.hpp"

#include <algorithm>
#include <charconv>
#include <limits>

#include "cg2a/checkpoint.hpp"
#include "cg2a/errors.hpp"

namespace cg2a::diagnostics {

namespace {

std::vector<const UpdateRecord*> select(const MetricsLog& log, Window w) {
  std::vector<const UpdateRecord*> out;
  for (const auto& r : log.records()) {
    if (r.step >= w.begin && r.step < w.end && r.update) out.push_back(&*r.update);
  }
  if (out.empty()) {
    throw StructuralError("diagnostics window [" + std::to_string(w.begin) + ", " +
                          std::to_string(w.end) + ") contains no update records");
  }
  const std::size_t n = out.front()->count();
  for (const auto* u : out) {
    if (u->count() != n) throw StructuralError("update records disagree on the gradient count");
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
    throw StructuralError("bad step index '" + s + "'");
  }
  return v;
}

}  // namespace

Window Window::parse(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw StructuralError("window must look like A:B, got '" + text + "'");
  Window w{parse_u64(text.substr(0, colon)), parse_u64(text.substr(colon + 1))};
  if (w.end <= w.begin) throw StructuralError("window end must exceed its start");
  return w;
}

Window Window::last(const MetricsLog& log, std::uint64_t steps) {
  if (log.empty()) return {0, 0};
  const std::uint64_t end = log.records().back().step + 1;
  return {end > steps ? end - steps : 0, end};
}

MagnitudeProfile magnitude_profile(const MetricsLog& log, Window window) {
  const auto records = select(log, window);
  const std::size_t n = records.front()->count();
  MagnitudeProfile p;
  p.augmentations = records.front()->augmentations;
  p.mean_normalized_magnitude.assign(n, 0.0);
  for (const auto* u : records) {
    const auto& norms = u->diagnostics.per_grad_l2_norm;
    double total = 0.0;
    for (double v : norms) total += v;
    for (std::size_t i = 0; i < n; ++i) {
      p.mean_normalized_magnitude[i] += total > 0.0 ? norms[i] / total : 1.0 / double(n);
    }
  }
  for (double& v : p.mean_normalized_magnitude) v /= double(records.size());
  const auto [lo, hi] = std::minmax_element(p.mean_normalized_magnitude.begin(), p.mean_normalized_magnitude.end());
  p.dominance = *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::infinity();
  return p;
}

CosineProfile cosine_profile(const MetricsLog& log, Window window) {
  const auto records = select(log, window);
  const std::size_t n = records.front()->count();
  CosineProfile p;
  std::size_t negatives = 0, entries = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      PairCosine pc{i, j, 0.0, 0.0};
      std::size_t neg = 0;
      for (const auto* u : records) {
        const double c = u->diagnostics.pairwise_cosine[i * n + j];
        pc.mean_cosine += c;
        neg += c < 0.0 ? 1 : 0;
      }
      pc.mean_cosine /= double(records.size());
      pc.negative_fraction = double(neg) / double(records.size());
      negatives += neg;
      entries += records.size();
      p.pairs.push_back(pc);
    }
  p.negative_fraction = entries ? double(negatives) / double(entries) : 0.0;
  return p;
}

double conflict_rate(const MetricsLog& log, Window window) {
  const auto records = select(log, window);
  double total = 0.0;
  for (const auto* u : records) total += u->diagnostics.conflict_fraction;
  return total / double(records.size());
}

std::vector<ConflictRow> conflict_series(const MetricsLog& log, Window window, std::uint64_t stride) {
  select(log, window);
  std::vector<ConflictRow> rows;
  if (stride == 0) stride = window.end - window.begin;
  for (std::uint64_t start = window.begin; start < window.end; start += stride) {
    const Window sub{start, std::min(window.end, start + stride)};
    const bool any = std::any_of(log.records().begin(), log.records().end(), [&](const StepRecord& r) {
      return r.update && r.step >= sub.begin && r.step < sub.end;
    });
    if (any) rows.push_back({sub.begin, sub.end, conflict_rate(log, sub)});
  }
  return rows;
}

std::string magnitudes_csv(const MagnitudeProfile& p) {
  std::string out = "augmentation,mean_normalized_magnitude\n";
  for (std::size_t i = 0; i < p.mean_normalized_magnitude.size(); ++i) {
    out += p.augmentations[i] + "," + fmt(p.mean_normalized_magnitude[i]) + "\n";
  }
  return out;
}

std::string cosines_csv(const CosineProfile& p) {
  std::string out = "pair_i,pair_j,mean_cosine,negative_fraction\n";
  for (const auto& pc : p.pairs) {
    out += std::to_string(pc.i) + "," + std::to_string(pc.j) + "," + fmt(pc.mean_cosine) + "," +
           fmt(pc.negative_fraction) + "\n";
  }
  return out;
}

std::string conflict_csv(const std::vector<ConflictRow>& rows) {
  std::string out = "window_start,window_end,mean_conflict_fraction\n";
  for (const auto& r : rows) {
    out += std::to_string(r.window_start) + "," + std::to_string(r.window_end) + "," +
           fmt(r.mean_conflict_fraction) + "\n";
  }
  return out;
}

void write_reports(const MetricsLog& log, Window window, std::uint64_t stride,
                   const std::filesystem::path& dir) {
  write_file_atomic(dir / "magnitudes.csv", magnitudes_csv(magnitude_profile(log, window)));
  write_file_atomic(dir / "cosines.csv", cosines_csv(cosine_profile(log, window)));
  write_file_atomic(dir / "conflict.csv", conflict_csv(conflict_series(log, window, stride)));
}

}  // namespace cg2a::diagnostics
