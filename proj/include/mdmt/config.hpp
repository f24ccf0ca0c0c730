#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mdmt/experiment.hpp"
#include "mdmt/stats.hpp"
#include "mdmt/synth.hpp"

namespace mdmt {

/// Flat `key = value` file with `#` comments and dotted section keys.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  std::optional<std::string> get(const std::string& key) const;
  void set(const std::string& key, std::string value);
  const std::map<std::string, std::string>& values() const noexcept { return values_; }
  const std::filesystem::path& base_dir() const noexcept { return base_dir_; }

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
};

/// Overrides from global command-line flags.
struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::filesystem::path> out;
};

struct ExperimentConfig {
  std::optional<ExperimentKind> kind;

  std::optional<std::filesystem::path> tau1_manifest;
  std::optional<std::filesystem::path> tau2_manifest;
  bool normalize_images = true;
  SynthConfig synth;
  /// Seed of the synthetic datasets; defaults to `seed` so every run of a
  /// pipeline sees the same data.
  std::uint64_t synth_seed = 0;

  BackboneConfig backbone;
  std::vector<std::size_t> head_hidden{64};
  TrainSchedule schedule;
  OptimizerConfig optimizer;
  LossOptions loss;

  SplitSpec split;
  std::vector<SplitSpec> pipeline_splits;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;
  /// Seeds for LOCO pipeline runs; defaults to `seeds`.
  std::vector<std::uint64_t> loco_seeds;
  std::size_t jobs = 1;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> checkpoint_dir;
  Pairing pairing = Pairing::kAuto;

  /// Every resolved key with its value, marked "(default)" when not given.
  std::vector<std::string> resolved;

  bool uses_synthetic_data() const { return !tau1_manifest && !tau2_manifest; }
};

/// Resolves every known key, applying defaults. All field problems are
/// collected into one ValidationError, one line per field.
ExperimentConfig resolve_config(const KeyValueConfig& raw, const CliOverrides& overrides);

}  // namespace mdmt
