#include "cg2a/metrics.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "cg2a/checkpoint.hpp"
#include "cg2a/errors.hpp"

namespace cg2a {

using nlohmann::json;

namespace {

json to_json(const StepRecord& r) {
  json j;
  j["step"] = r.step;
  if (r.update) {
    const auto& u = *r.update;
    const auto& d = u.diagnostics;
    const std::size_t n = u.count();
    j["augmentations"] = u.augmentations;
    j["losses"] = u.losses;
    j["weights"] = d.weights.w;
    j["fallback"] = d.weights.fallback_used;
    j["negative_weights"] = d.negative_weights;
    j["conflict_fraction"] = d.conflict_fraction;
    j["gamma"] = d.gamma_sampled;
    j["grad_norms"] = d.per_grad_l2_norm;
    json cos = json::array();
    for (std::size_t i = 0; i < n; ++i) {
      cos.push_back(std::vector<double>(d.pairwise_cosine.begin() + static_cast<std::ptrdiff_t>(i * n),
                                        d.pairwise_cosine.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
    }
    j["cosines"] = std::move(cos);
  }
  if (r.episode_return) j["episode_return"] = *r.episode_return;
  return j;
}

StepRecord from_json(const json& j) {
  StepRecord r;
  r.step = j.at("step").get<std::uint64_t>();
  if (j.contains("losses")) {
    UpdateRecord u;
    auto& d = u.diagnostics;
    u.augmentations = j.at("augmentations").get<std::vector<std::string>>();
    u.losses = j.at("losses").get<std::vector<double>>();
    d.weights.w = j.at("weights").get<std::vector<double>>();
    d.weights.fallback_used = j.at("fallback").get<bool>();
    d.negative_weights = j.at("negative_weights").get<std::size_t>();
    d.conflict_fraction = j.at("conflict_fraction").get<double>();
    d.gamma_sampled = j.at("gamma").get<double>();
    d.per_grad_l2_norm = j.at("grad_norms").get<std::vector<double>>();
    const std::size_t n = d.per_grad_l2_norm.size();
    const auto& cos = j.at("cosines");
    if (cos.size() != n) throw IoError("cosine matrix has the wrong row count");
    for (const auto& row : cos) {
      auto v = row.get<std::vector<double>>();
      if (v.size() != n) throw IoError("cosine matrix has the wrong column count");
      d.pairwise_cosine.insert(d.pairwise_cosine.end(), v.begin(), v.end());
    }
    if (u.losses.size() != n || d.weights.w.size() != n || u.augmentations.size() != n) {
      throw IoError("update record fields disagree on the gradient count");
    }
    r.update = std::move(u);
  }
  if (j.contains("episode_return")) r.episode_return = j.at("episode_return").get<double>();
  return r;
}

}  // namespace

void MetricsLog::append(StepRecord record) {
  if (!records_.empty() && record.step <= records_.back().step) {
    throw StructuralError("metrics log steps must strictly increase (got " +
                          std::to_string(record.step) + " after " +
                          std::to_string(records_.back().step) + ")");
  }
  records_.push_back(std::move(record));
}

std::string MetricsLog::to_jsonl() const {
  std::string out;
  for (const auto& r : records_) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

MetricsLog MetricsLog::from_jsonl(const std::string& text) {
  MetricsLog log;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      log.append(from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw IoError("metrics line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return log;
}

void MetricsLog::save(const std::filesystem::path& path) const { write_file_atomic(path, to_jsonl()); }

MetricsLog MetricsLog::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open metrics log " + path.string());
  return from_jsonl(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
}

}  // namespace cg2a
