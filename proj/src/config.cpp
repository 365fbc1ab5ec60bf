#include "cg2a/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "cg2a/errors.hpp"

namespace cg2a {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  while (true) {
    const auto comma = s.find(',');
    const auto item = trim(s.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc{} || res.ptr != end) {
    throw ConfigError(std::string(key), "cannot parse '" + std::string(text) + "' as a number");
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ConfigError(std::string(key), "expected true or false");
}

using Setter = std::function<void(RunConfig&, std::string_view)>;

// Damping bounds are validated together once both are known.
struct DampingBounds {
  double alpha;
  double beta;
};

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    auto u64 = [](std::uint64_t agent::TrainConfig::*field, const char* key) {
      return [field, key](RunConfig& c, std::string_view v) { c.train.*field = parse_number<std::uint64_t>(key, v); };
    };
    auto size = [](std::size_t agent::TrainConfig::*field, const char* key) {
      return [field, key](RunConfig& c, std::string_view v) { c.train.*field = parse_number<std::size_t>(key, v); };
    };
    auto real = [](double agent::TrainConfig::*field, const char* key) {
      return [field, key](RunConfig& c, std::string_view v) { c.train.*field = parse_number<double>(key, v); };
    };
    auto opt = [](double OptimizerConfig::*field, const char* key) {
      return [field, key](RunConfig& c, std::string_view v) {
        c.train.optimizer.*field = parse_number<double>(key, v);
      };
    };
    t["version"] = [](RunConfig& c, std::string_view v) { c.version = parse_number<int>("version", v); };
    t["total_steps"] = u64(&agent::TrainConfig::total_steps, "total_steps");
    t["batch_size"] = size(&agent::TrainConfig::batch_size, "batch_size");
    t["discount"] = real(&agent::TrainConfig::discount, "discount");
    t["optimizer"] = [](RunConfig& c, std::string_view v) {
      c.train.optimizer.kind = parse_optimizer_kind(v);
    };
    t["learning_rate"] = opt(&OptimizerConfig::learning_rate, "learning_rate");
    t["adam_beta1"] = opt(&OptimizerConfig::adam_beta1, "adam_beta1");
    t["adam_beta2"] = opt(&OptimizerConfig::adam_beta2, "adam_beta2");
    t["adam_epsilon"] = opt(&OptimizerConfig::adam_epsilon, "adam_epsilon");
    t["target_sync_period"] = u64(&agent::TrainConfig::target_sync_period, "target_sync_period");
    t["buffer_capacity"] = size(&agent::TrainConfig::buffer_capacity, "buffer_capacity");
    t["warmup_steps"] = u64(&agent::TrainConfig::warmup_steps, "warmup_steps");
    t["temperature_start"] = real(&agent::TrainConfig::temperature_start, "temperature_start");
    t["temperature_end"] = real(&agent::TrainConfig::temperature_end, "temperature_end");
    t["temperature_anneal_fraction"] =
        real(&agent::TrainConfig::temperature_anneal_fraction, "temperature_anneal_fraction");
    t["augmentations"] = [](RunConfig& c, std::string_view v) {
      c.train.augmentations.clear();
      for (const auto& item : split_list(v)) c.train.augmentations.push_back(augbox::AugmentationSpec::parse(item));
    };
    t["single_aug"] = [](RunConfig& c, std::string_view v) {
      c.train.single_aug = augbox::AugmentationSpec::parse(std::string(v));
    };
    t["overlay_form"] = [](RunConfig& c, std::string_view v) {
      if (v == "convex") c.train.overlay_form = augbox::OverlayForm::Convex;
      else if (v == "literal") c.train.overlay_form = augbox::OverlayForm::Literal;
      else throw ConfigError("overlay_form", "expected convex or literal");
    };
    t["agreement"] = [](RunConfig& c, std::string_view v) { c.train.agreement = gradkit::parse_agreement_mode(v); };
    t["damping_alpha"] = [](RunConfig&, std::string_view) {};
    t["damping_beta"] = [](RunConfig&, std::string_view) {};
    t["aggregation"] = [](RunConfig& c, std::string_view v) { c.train.aggregation = agent::parse_aggregation(v); };
    t["seed"] = u64(&agent::TrainConfig::seed, "seed");
    t["bank_seed"] = u64(&agent::TrainConfig::bank_seed, "bank_seed");
    t["bank_size"] = size(&agent::TrainConfig::bank_size, "bank_size");
    t["train_variant"] = [](RunConfig& c, std::string_view v) { c.train.train_variant = pixelworld::parse_variant(v); };
    t["network"] = [](RunConfig& c, std::string_view v) { c.train.network = QNetworkSpec::parse(std::string(v)); };
    t["eval_variants"] = [](RunConfig& c, std::string_view v) {
      c.eval_variants.clear();
      for (const auto& item : split_list(v)) c.eval_variants.push_back(pixelworld::parse_variant(item));
    };
    t["eval_episodes"] = [](RunConfig& c, std::string_view v) {
      c.eval_episodes = parse_number<std::size_t>("eval_episodes", v);
    };
    t["eval_seed"] = [](RunConfig& c, std::string_view v) { c.eval_seed = parse_number<std::uint64_t>("eval_seed", v); };
    t["output_dir"] = [](RunConfig& c, std::string_view v) { c.output_dir = std::string(v); };
    t["diagnostics_steps"] = [](RunConfig& c, std::string_view v) {
      c.diagnostics_steps = parse_number<std::uint64_t>("diagnostics_steps", v);
    };
    t["diagnostics_stride"] = [](RunConfig& c, std::string_view v) {
      c.diagnostics_stride = parse_number<std::uint64_t>("diagnostics_stride", v);
    };
    t["checkpoint_every"] = [](RunConfig& c, std::string_view v) {
      c.checkpoint_every = parse_number<std::uint64_t>("checkpoint_every", v);
    };
    t["dump_frames"] = [](RunConfig& c, std::string_view v) { c.dump_frames = parse_bool("dump_frames", v); };
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::validate() const {
  if (version != kConfigVersion) {
    throw ConfigError("version", "unsupported config version " + std::to_string(version) + " (expected " +
                                     std::to_string(kConfigVersion) + ")");
  }
  train.validate();
  if (eval_variants.empty()) throw ConfigError("eval_variants", "must name at least one variant");
  if (eval_episodes == 0) throw ConfigError("eval_episodes", "must be positive");
  if (output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
  if (diagnostics_steps == 0) throw ConfigError("diagnostics_steps", "must be positive");
  if (diagnostics_stride == 0) throw ConfigError("diagnostics_stride", "must be positive");
}

RunConfig parse_config_text(std::string_view text) {
  RunConfig config;
  std::set<std::string, std::less<>> seen;
  DampingBounds damping{config.train.damping.alpha(), config.train.damping.beta()};
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no), "expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    const auto value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(key, "unknown key");
    if (!seen.insert(key).second) throw ConfigError(key, "repeated key");
    if (value.empty()) throw ConfigError(key, "missing value");
    try {
      if (key == "damping_alpha") damping.alpha = parse_number<double>(key, value);
      else if (key == "damping_beta") damping.beta = parse_number<double>(key, value);
      else it->second(config, value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(key, e.what());
    }
  }
  try {
    config.train.damping = gradkit::DampingDistribution(damping.alpha, damping.beta);
  } catch (const std::exception& e) {
    throw ConfigError("damping_alpha/damping_beta", e.what());
  }
  config.validate();
  return config;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string echo_config(const RunConfig& c) {
  const auto& t = c.train;
  std::ostringstream out;
  auto join_augs = [](const std::vector<augbox::AugmentationSpec>& specs) {
    std::string s;
    for (const auto& spec : specs) s += (s.empty() ? "" : ", ") + spec.name();
    return s;
  };
  std::string variants;
  for (auto v : c.eval_variants) variants += (variants.empty() ? "" : ", ") + std::string(pixelworld::to_string(v));

  out << "# effective configuration\n";
  out << "version = " << c.version << "\n";
  out << "total_steps = " << t.total_steps << "\n";
  out << "batch_size = " << t.batch_size << "\n";
  out << "discount = " << fmt(t.discount) << "\n";
  out << "optimizer = " << to_string(t.optimizer.kind) << "\n";
  out << "learning_rate = " << fmt(t.optimizer.learning_rate) << "\n";
  out << "adam_beta1 = " << fmt(t.optimizer.adam_beta1) << "\n";
  out << "adam_beta2 = " << fmt(t.optimizer.adam_beta2) << "\n";
  out << "adam_epsilon = " << fmt(t.optimizer.adam_epsilon) << "\n";
  out << "target_sync_period = " << t.target_sync_period << "\n";
  out << "buffer_capacity = " << t.buffer_capacity << "\n";
  out << "warmup_steps = " << t.warmup_steps << "\n";
  out << "temperature_start = " << fmt(t.temperature_start) << "\n";
  out << "temperature_end = " << fmt(t.temperature_end) << "\n";
  out << "temperature_anneal_fraction = " << fmt(t.temperature_anneal_fraction) << "\n";
  out << "augmentations = " << join_augs(t.augmentations) << "\n";
  out << "single_aug = " << t.single_aug.name() << "\n";
  out << "overlay_form = " << (t.overlay_form == augbox::OverlayForm::Convex ? "convex" : "literal") << "\n";
  out << "agreement = " << gradkit::to_string(t.agreement) << "\n";
  out << "damping_alpha = " << fmt(t.damping.alpha()) << "\n";
  out << "damping_beta = " << fmt(t.damping.beta()) << "\n";
  out << "aggregation = " << agent::to_string(t.aggregation) << "\n";
  out << "seed = " << t.seed << "\n";
  out << "bank_seed = " << t.bank_seed << "\n";
  out << "bank_size = " << t.bank_size << "\n";
  out << "train_variant = " << pixelworld::to_string(t.train_variant) << "\n";
  out << "network = " << t.network.canonical() << "\n";
  out << "eval_variants = " << variants << "\n";
  out << "eval_episodes = " << c.eval_episodes << "\n";
  out << "eval_seed = " << c.eval_seed << "\n";
  out << "output_dir = " << c.output_dir << "\n";
  out << "diagnostics_steps = " << c.diagnostics_steps << "\n";
  out << "diagnostics_stride = " << c.diagnostics_stride << "\n";
  out << "checkpoint_every = " << c.checkpoint_every << "\n";
  out << "dump_frames = " << (c.dump_frames ? "true" : "false") << "\n";
  return out.str();
}

}  // namespace cg2a
