#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdmt/data.hpp"

namespace mdmt {

struct Fold {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;
  /// Held-out center for LOCO folds, empty for CV.
  std::string center;
};

struct SplitPlan {
  enum class Kind { kCrossValidation, kLeaveOneCenterOut };

  Kind kind = Kind::kCrossValidation;
  std::size_t k = 0;
  std::vector<Fold> folds;

  /// "cv:<k>" or "loco".
  std::string describe() const;
};

/// Fraction of each training fold carved out (per class) for early stopping.
inline constexpr double kValidationFraction = 0.1;

/// Per-class shuffled round-robin over k folds. Class c's samples continue the
/// round-robin where the previous class stopped, so fold sizes and per-class
/// fold counts are both within one of exact proportionality.
SplitPlan stratified_kfold(const TaskDataset& dataset, std::size_t k, std::uint64_t seed);

/// One fold per center (sorted by center id); the test set is that center's
/// samples and train/val come from all other centers.
SplitPlan loco_split(const TaskDataset& dataset, std::uint64_t seed = 0);

/// Splits `ids` (a training pool) into (train, val) with a stratified 10%
/// validation share. Ordering follows the dataset.
std::pair<std::vector<std::string>, std::vector<std::string>> carve_validation(const TaskDataset& dataset,
                                                                              const std::vector<std::string>& ids,
                                                                              std::uint64_t seed);

/// Parses "cv:<k>" or "loco".
struct SplitSpec {
  SplitPlan::Kind kind = SplitPlan::Kind::kCrossValidation;
  std::size_t k = 5;

  static SplitSpec parse(const std::string& text);
  std::string describe() const;
};

}  // namespace mdmt
