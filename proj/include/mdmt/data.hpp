#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mdmt/tensor.hpp"

namespace mdmt {

/// Symbolic task identity. The two canonical tasks are severity prognosis
/// (tau1, binary) and severity assessment (tau2, four categories).
struct TaskId {
  std::string name;

  auto operator<=>(const TaskId&) const = default;
};

inline const TaskId kTau1{"tau1"};
inline const TaskId kTau2{"tau2"};

struct TaskSample {
  Tensor image;  // [C x H x W], values in [0, 1]
  int label = 0;
  TaskId task;
  std::string center_id;
  std::string sample_id;
};

/// Labeled collection bound to a single task.
struct TaskDataset {
  TaskId task;
  int num_classes = 0;
  std::vector<TaskSample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }

  /// Throws ValidationError when an invariant does not hold.
  void validate() const;

  /// Subset in the order of `sample_ids`; throws on unknown ids.
  TaskDataset subset(std::span<const std::string> sample_ids) const;

  std::vector<std::size_t> class_counts() const;
};

/// Batch drawn from the union of several task datasets.
struct MixedBatch {
  Tensor images;  // [N x C x H x W]
  std::vector<TaskId> tasks;
  std::vector<int> labels;       // class index within the sample's own task
  std::vector<int> num_classes;  // class count of the sample's task
  std::vector<std::string> center_ids;
  std::vector<std::string> sample_ids;

  std::size_t size() const noexcept { return tasks.size(); }
  std::vector<double> one_hot(std::size_t i) const;
};

MixedBatch make_batch(std::span<const TaskSample* const> samples, std::span<const int> num_classes);

/// Sum of the six regional Brixia scores, each in [0, 3].
int brixia_global_score(std::span<const int> regional);

/// Four severity categories with thresholds 5, 9 and 14 on the global score.
int brixia_categorize(int global_score);

/// Reference to sample `index` of dataset `dataset` in a sampler's list.
struct SampleRef {
  std::size_t dataset = 0;
  std::size_t index = 0;

  bool operator==(const SampleRef&) const = default;
};

/// Draws mixed batches without replacement within an epoch.
///
/// Uniform mode shuffles the concatenated index space of all datasets, so
/// the expected task mix is proportional to dataset sizes. Balanced mode
/// (experimental) oversamples smaller datasets so each epoch holds the same
/// number of samples per task, interleaved.
class MixedBatchSampler {
 public:
  MixedBatchSampler(std::vector<const TaskDataset*> datasets, std::size_t batch_size, std::uint64_t seed,
                    bool balanced = false);

  /// Next batch of the current epoch, starting a new epoch when the previous
  /// one is exhausted. The final batch of an epoch may be short.
  std::vector<SampleRef> next_refs();
  MixedBatch next_batch();

  /// All remaining batches of the current epoch (a fresh epoch if none remain).
  std::vector<std::vector<SampleRef>> epoch();

  MixedBatch materialize(std::span<const SampleRef> refs) const;

  std::size_t epoch_size() const;
  std::size_t batch_size() const noexcept { return batch_size_; }

 private:
  void start_epoch();

  std::vector<const TaskDataset*> datasets_;
  std::size_t batch_size_;
  bool balanced_;
  std::mt19937_64 rng_;
  std::vector<SampleRef> order_;
  std::size_t cursor_ = 0;
};

/// Deterministic sequential batches over datasets, used for evaluation.
std::vector<MixedBatch> sequential_batches(std::span<const TaskDataset* const> datasets, std::size_t batch_size);

}  // namespace mdmt
