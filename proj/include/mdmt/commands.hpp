#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mdmt/config.hpp"

namespace mdmt {

// Stable exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitDivergence = 3;

/// Runs `command`, mapping ValidationError, PrerequisiteError and IoError to
/// exit code 2 and DivergenceError to 3. Messages go to `err`.
int run_command(const std::function<int()>& command, std::ostream& err);

/// "cv5" or "loco"; used in file and directory names.
std::string split_tag(const SplitSpec& split);

/// Loads the manifests named in the config, or generates the synthetic
/// datasets, writes them under `<out>/data` and loads them back so training
/// sees the same 8-bit images a manifest run would.
std::pair<TaskDataset, TaskDataset> load_datasets(const ExperimentConfig& config, std::ostream& log);

/// Writes `<out>/tau1` and `<out>/tau2` dataset trees and prints per-class
/// and per-center counts.
int cmd_generate(const ExperimentConfig& config, std::ostream& out);

/// Runs one experiment kind over the configured split. Writes
/// `<out>/results/<kind>_<split>_seed<seed>.csv`, per-fold checkpoints and a
/// run log listing every resolved setting.
int cmd_train(const ExperimentConfig& config, std::ostream& out);

struct CompareOptions {
  std::filesystem::path a;
  std::filesystem::path b;
  Pairing pairing = Pairing::kAuto;
  std::string task = "tau1";
  /// Writes `<out>/compare.txt` and `<out>/compare.csv` when set.
  std::optional<std::filesystem::path> out_dir;
};

int cmd_compare(const CompareOptions& options, std::ostream& out);

struct ReportOptions {
  std::vector<std::filesystem::path> inputs;
  std::string task = "tau1";
  std::optional<std::filesystem::path> output;
};

/// Markdown table with one row per experiment and "mean(sd)" cells in
/// percent per split group and metric. The best mean per column is wrapped
/// in `**`; ties go to the first listed experiment.
std::string format_report(const std::vector<ResultTable>& tables, const std::string& task);

int cmd_report(const ReportOptions& options, std::ostream& out);

/// STL_tau1, STL_tau2, FT and MDMT for every seed and split, then the
/// comparisons (MDMT vs STL_tau1, MDMT vs FT) and the summary report.
int cmd_pipeline(const ExperimentConfig& config, std::ostream& out);

}  // namespace mdmt
