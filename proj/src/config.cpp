#include "mdmt/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "mdmt/errors.hpp"

namespace mdmt {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ValidationError("'" + text + "' is not a valid number");
  return value;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ValidationError("'" + text + "' is not a boolean");
}

std::string show(double v) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.10g", v);
  return buffer;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

// Reads keys from a raw config, records resolved values and collects
// field-level errors.
class Resolver {
 public:
  explicit Resolver(const KeyValueConfig& raw) : raw_(raw) {}

  // Applies `parse` to the configured value or records the default.
  void field(const std::string& key, const std::function<void(const std::string&)>& parse,
             const std::function<std::string()>& current) {
    used_.insert(key);
    auto value = raw_.get(key);
    if (!value) {
      resolved_.push_back(key + " = " + current() + "  (default)");
      return;
    }
    try {
      parse(*value);
      resolved_.push_back(key + " = " + current());
    } catch (const std::exception& e) {
      errors_.push_back(key + ": " + e.what());
    }
  }

  void error(const std::string& message) { errors_.push_back(message); }

  // Rewrites the resolved line of `key` after a later override.
  void amend(const std::string& key, const std::string& value, const std::string& origin) {
    for (auto& line : resolved_) {
      if (line.rfind(key + " = ", 0) == 0) line = key + " = " + value + "  (" + origin + ")";
    }
  }

  void finish() {
    for (const auto& [key, value] : raw_.values()) {
      if (!used_.count(key)) errors_.push_back(key + ": unknown key");
    }
    if (errors_.empty()) return;
    std::string message = "invalid configuration:";
    for (const auto& e : errors_) message += "\n  " + e;
    throw ValidationError(message);
  }

  std::filesystem::path path(const std::string& text) const {
    std::filesystem::path p = text;
    return p.is_relative() ? raw_.base_dir() / p : p;
  }

  std::vector<std::string> take_resolved() { return std::move(resolved_); }

 private:
  const KeyValueConfig& raw_;
  std::set<std::string> used_;
  std::vector<std::string> resolved_;
  std::vector<std::string> errors_;
};

std::string describe_blocks(const std::vector<ConvBlock>& blocks) {
  std::vector<std::string> parts;
  for (const auto& b : blocks) parts.push_back(std::to_string(b.filters) + "x" + std::to_string(b.kernel));
  return join(parts);
}

template <typename T>
std::string describe_list(const std::vector<T>& values) {
  std::vector<std::string> parts;
  for (const auto& v : values) parts.push_back(std::to_string(v));
  return join(parts);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_number = 0;
  std::vector<std::string> errors;
  while (std::getline(in, line)) {
    ++line_number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back(origin + ":" + std::to_string(line_number) + ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      errors.push_back(origin + ":" + std::to_string(line_number) + ": empty key");
      continue;
    }
    if (!config.values_.emplace(key, value).second) {
      errors.push_back(origin + ":" + std::to_string(line_number) + ": duplicate key '" + key + "'");
    }
  }
  if (!errors.empty()) {
    std::string message = "invalid configuration:";
    for (const auto& e : errors) message += "\n  " + e;
    throw ValidationError(message);
  }
  return config;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  KeyValueConfig config = parse(buffer.str(), path.string());
  config.base_dir_ = path.parent_path();
  return config;
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

void KeyValueConfig::set(const std::string& key, std::string value) { values_[key] = std::move(value); }

ExperimentConfig resolve_config(const KeyValueConfig& raw, const CliOverrides& overrides) {
  ExperimentConfig c;
  Resolver r(raw);

  r.field(
      "experiment", [&](const std::string& v) { c.kind = parse_experiment_kind(v); },
      [&] { return c.kind ? to_string(*c.kind) : std::string("<unset>"); });

  bool seed_given = false;
  r.field(
      "seed",
      [&](const std::string& v) {
        c.seed = parse_number<std::uint64_t>(v);
        seed_given = true;
      },
      [&] { return std::to_string(c.seed); });
  if (overrides.seed) {
    c.seed = *overrides.seed;
    seed_given = true;
    r.amend("seed", std::to_string(c.seed), "--seed");
  }
  r.field(
      "seeds",
      [&](const std::string& v) {
        for (const auto& item : split_list(v)) c.seeds.push_back(parse_number<std::uint64_t>(item));
        if (c.seeds.empty()) throw ValidationError("needs at least one seed");
      },
      [&] { return describe_list(c.seeds); });
  if (overrides.seed) {
    c.seeds = {*overrides.seed};
    r.amend("seeds", describe_list(c.seeds), "--seed");
  }
  if (c.seeds.empty() && seed_given) {
    c.seeds = {c.seed};
    r.amend("seeds", describe_list(c.seeds), "from seed");
  }
  if (!seed_given && !c.seeds.empty()) {
    c.seed = c.seeds.front();
    seed_given = true;
    r.amend("seed", std::to_string(c.seed), "first of seeds");
  }
  if (!seed_given) r.error("seed: required (set 'seed' or 'seeds' in the config or pass --seed)");
  r.field(
      "pipeline.loco_seeds",
      [&](const std::string& v) {
        for (const auto& item : split_list(v)) c.loco_seeds.push_back(parse_number<std::uint64_t>(item));
      },
      [&] { return c.loco_seeds.empty() ? std::string("<seeds>") : describe_list(c.loco_seeds); });
  if (c.loco_seeds.empty()) c.loco_seeds = c.seeds;

  r.field(
      "jobs", [&](const std::string& v) { c.jobs = parse_number<std::size_t>(v); },
      [&] { return std::to_string(c.jobs); });
  if (overrides.jobs) {
    c.jobs = *overrides.jobs;
    r.amend("jobs", std::to_string(c.jobs), "--jobs");
  }
  if (c.jobs == 0) r.error("jobs: must be at least 1");

  r.field(
      "out", [&](const std::string& v) { c.out_dir = r.path(v); }, [&] { return c.out_dir.string(); });
  if (overrides.out) {
    c.out_dir = *overrides.out;
    r.amend("out", c.out_dir.string(), "--out");
  }
  if (c.out_dir.empty()) {
    c.out_dir = "mdmt_out";
    r.amend("out", c.out_dir.string(), "default");
  }

  r.field(
      "split", [&](const std::string& v) { c.split = SplitSpec::parse(v); }, [&] { return c.split.describe(); });
  c.pipeline_splits = {SplitSpec{SplitPlan::Kind::kCrossValidation, 5}, SplitSpec{SplitPlan::Kind::kLeaveOneCenterOut, 0}};
  r.field(
      "pipeline.splits",
      [&](const std::string& v) {
        c.pipeline_splits.clear();
        for (const auto& item : split_list(v)) c.pipeline_splits.push_back(SplitSpec::parse(item));
        if (c.pipeline_splits.empty()) throw ValidationError("needs at least one split");
      },
      [&] {
        std::vector<std::string> parts;
        for (const auto& s : c.pipeline_splits) parts.push_back(s.describe());
        return join(parts);
      });

  r.field(
      "data.tau1_manifest", [&](const std::string& v) { c.tau1_manifest = r.path(v); },
      [&] { return c.tau1_manifest ? c.tau1_manifest->string() : std::string("<synthetic>"); });
  r.field(
      "data.tau2_manifest", [&](const std::string& v) { c.tau2_manifest = r.path(v); },
      [&] { return c.tau2_manifest ? c.tau2_manifest->string() : std::string("<synthetic>"); });
  if (c.tau1_manifest.has_value() != c.tau2_manifest.has_value()) {
    r.error("data: set both data.tau1_manifest and data.tau2_manifest, or neither for synthetic data");
  }
  for (const auto* p : {&c.tau1_manifest, &c.tau2_manifest}) {
    if (*p && !std::filesystem::exists(**p)) r.error("data: manifest " + (*p)->string() + " does not exist");
  }
  r.field(
      "data.normalize", [&](const std::string& v) { c.normalize_images = parse_bool(v); },
      [&] { return std::string(c.normalize_images ? "true" : "false"); });

  auto size_field = [&](const std::string& key, std::size_t& target) {
    r.field(
        key, [&](const std::string& v) { target = parse_number<std::size_t>(v); }, [&] { return std::to_string(target); });
  };
  auto double_field = [&](const std::string& key, double& target) {
    r.field(
        key, [&](const std::string& v) { target = parse_number<double>(v); }, [&] { return show(target); });
  };
  auto int_field = [&](const std::string& key, int& target) {
    r.field(
        key, [&](const std::string& v) { target = parse_number<int>(v); }, [&] { return std::to_string(target); });
  };
  auto bool_field = [&](const std::string& key, bool& target) {
    r.field(
        key, [&](const std::string& v) { target = parse_bool(v); },
        [&] { return std::string(target ? "true" : "false"); });
  };

  c.synth_seed = c.seed;
  r.field(
      "synth.seed", [&](const std::string& v) { c.synth_seed = parse_number<std::uint64_t>(v); },
      [&] { return std::to_string(c.synth_seed); });
  size_field("synth.n_tau1", c.synth.n_tau1);
  size_field("synth.n_tau2", c.synth.n_tau2);
  size_field("synth.n_centers", c.synth.n_centers);
  double_field("synth.label_noise", c.synth.label_noise);
  double_field("synth.pixel_noise", c.synth.pixel_noise);
  double_field("synth.background", c.synth.background);
  double_field("synth.blob_radius_min", c.synth.blob_radius_min);
  double_field("synth.blob_radius_max", c.synth.blob_radius_max);
  double_field("synth.blob_intensity_min", c.synth.blob_intensity_min);
  double_field("synth.blob_intensity_max", c.synth.blob_intensity_max);
  double_field("synth.center_offset", c.synth.center_offset);

  r.field(
      "model.backbone", [&](const std::string& v) { c.backbone.name = v; }, [&] { return c.backbone.name; });
  size_field("model.input_channels", c.backbone.input_channels);
  size_field("model.input_size", c.backbone.input_size);
  r.field(
      "model.conv_blocks",
      [&](const std::string& v) {
        c.backbone.conv_blocks.clear();
        for (const auto& item : split_list(v)) {
          const auto x = item.find('x');
          if (x == std::string::npos) throw ValidationError("blocks are written <filters>x<kernel>, got '" + item + "'");
          c.backbone.conv_blocks.push_back(
              ConvBlock{parse_number<std::size_t>(item.substr(0, x)), parse_number<std::size_t>(item.substr(x + 1))});
        }
      },
      [&] { return describe_blocks(c.backbone.conv_blocks); });
  r.field(
      "model.head_hidden",
      [&](const std::string& v) {
        c.head_hidden.clear();
        for (const auto& item : split_list(v)) c.head_hidden.push_back(parse_number<std::size_t>(item));
      },
      [&] { return describe_list(c.head_hidden); });
  c.synth.image_size = c.backbone.input_size;
  c.synth.normalize = c.normalize_images;

  r.field(
      "train.schedule",
      [&](const std::string& v) {
        if (v == "full") {
          c.schedule = TrainSchedule::full();
        } else if (v == "desk") {
          c.schedule = TrainSchedule::desk();
        } else {
          throw ValidationError("must be 'desk' or 'full', got '" + v + "'");
        }
      },
      [&] { return std::string("desk"); });
  int_field("train.max_epochs", c.schedule.max_epochs);
  int_field("train.warmup_epochs", c.schedule.warmup_epochs);
  int_field("train.patience", c.schedule.patience);
  size_field("train.batch_size", c.schedule.batch_size);
  size_field("train.eval_batch_size", c.schedule.eval_batch_size);
  bool_field("train.balanced_batches", c.schedule.balanced_batches);
  bool_field("train.per_task_mean", c.loss.per_task_mean);

  double_field("optimizer.learning_rate", c.optimizer.learning_rate);
  double_field("optimizer.beta1", c.optimizer.beta1);
  double_field("optimizer.beta2", c.optimizer.beta2);
  double_field("optimizer.epsilon", c.optimizer.epsilon);
  double_field("optimizer.weight_decay", c.optimizer.weight_decay);

  r.field(
      "checkpoints.dir", [&](const std::string& v) { c.checkpoint_dir = r.path(v); },
      [&] { return c.checkpoint_dir ? c.checkpoint_dir->string() : std::string("<out>/checkpoints/<split>"); });
  r.field(
      "compare.pairing", [&](const std::string& v) { c.pairing = parse_pairing(v); },
      [&] { return to_string(c.pairing); });

  auto check = [&](const std::function<void()>& validate) {
    try {
      validate();
    } catch (const ValidationError& e) {
      r.error(e.what());
    }
  };
  check([&] { c.synth.validate(); });
  check([&] { c.backbone.validate(); });
  check([&] {
    for (std::size_t w : c.head_hidden) {
      if (w == 0) throw ValidationError("model.head_hidden widths must be positive");
    }
  });
  check([&] { c.schedule.validate(); });
  check([&] { c.optimizer.validate(); });

  r.finish();
  c.resolved = r.take_resolved();
  return c;
}

}  // namespace mdmt
