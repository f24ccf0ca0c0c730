#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mdmt/data.hpp"
#include "mdmt/errors.hpp"
#include "mdmt/metrics.hpp"
#include "mdmt/model.hpp"
#include "mdmt/splits.hpp"
#include "mdmt/training.hpp"

namespace mdmt {

enum class ExperimentKind { kStlTau1, kStlTau2, kFineTune, kMdmt };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& text);

/// A required earlier run (e.g. the STL checkpoint for FT) is missing.
class PrerequisiteError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct FoldResult {
  int fold = 0;
  std::map<TaskId, Metrics> metrics;
  int epochs_run = 0;
  int best_epoch = 0;
};

/// Split plans for both tasks with the same number of folds; fold f of one
/// plan is paired with fold f of the other.
struct TaskSplits {
  SplitPlan tau1;
  SplitPlan tau2;

  std::size_t fold_count() const { return tau1.folds.size(); }
};

/// Builds per-task plans. For LOCO, tau2 is split by center too when both
/// datasets cover the same centers; otherwise tau2 falls back to stratified
/// CV with as many folds as tau1 has centers.
TaskSplits make_task_splits(const TaskDataset& tau1, const TaskDataset& tau2, const SplitSpec& spec,
                            std::uint64_t seed);

struct ExperimentSetup {
  ExperimentKind kind = ExperimentKind::kMdmt;
  BackboneConfig backbone;
  std::vector<std::size_t> head_hidden{64};
  TrainSchedule schedule;
  OptimizerConfig optimizer;
  LossOptions loss;
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint_dir;
  std::size_t jobs = 1;
};

/// Head layout of each experiment kind: STL runs carry their own task's head,
/// FT and MDMT carry both (tau1 with 2 outputs, tau2 with 4).
ModelConfig model_config_for(const ExperimentSetup& setup, ExperimentKind kind, int tau1_classes, int tau2_classes);

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, ExperimentKind kind, std::uint64_t seed,
                                      std::size_t fold);

/// Checkpoints `kind` needs from earlier runs; empty for STL.
std::vector<std::filesystem::path> required_checkpoints(const ExperimentSetup& setup, std::size_t folds);

/// Runs one experiment kind over every fold, saving a checkpoint per fold.
/// Folds are independent and run on up to `setup.jobs` threads; results come
/// back in fold order.
std::vector<FoldResult> run_experiment(const ExperimentSetup& setup, const TaskDataset& tau1, const TaskDataset& tau2,
                                       const TaskSplits& splits);

// Result CSV: "# schema_version=1 split=<split>" then
// experiment,backbone,fold,task,acc,f1,gm,epochs_run,best_epoch,seed
inline constexpr int kResultSchemaVersion = 1;

struct ResultRow {
  std::string experiment;
  std::string backbone;
  int fold = 0;
  std::string task;
  double acc = 0.0;
  double f1 = 0.0;
  double gm = 0.0;
  int epochs_run = 0;
  int best_epoch = 0;
  std::uint64_t seed = 0;
};

struct ResultTable {
  int schema_version = kResultSchemaVersion;
  std::string split;
  std::vector<ResultRow> rows;
};

std::vector<ResultRow> to_rows(ExperimentKind kind, const std::string& backbone, std::uint64_t seed,
                               const std::vector<FoldResult>& results);
std::string format_results_csv(const ResultTable& table);
ResultTable parse_results_csv(const std::string& text, const std::string& origin = "<memory>");
ResultTable read_results_csv(const std::filesystem::path& path);

}  // namespace mdmt
