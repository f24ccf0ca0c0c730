#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "mdmt/data.hpp"
#include "mdmt/model.hpp"
#include "mdmt/nn.hpp"

namespace mdmt {

struct TrainSchedule {
  // Full-scale protocol: Adam with a 40-epoch warm-up, early stopping with
  // patience 40, at most 300 epochs, batches of 128.
  static constexpr int kFullMaxEpochs = 300;
  static constexpr int kFullWarmupEpochs = 40;
  static constexpr int kFullPatience = 40;
  static constexpr std::size_t kFullBatchSize = 128;

  int max_epochs = 60;
  int warmup_epochs = 8;
  int patience = 8;
  std::size_t batch_size = 32;
  std::size_t eval_batch_size = 256;
  /// Experimental per-task balanced batches; uniform over the union when off.
  bool balanced_batches = false;

  static TrainSchedule full();
  static TrainSchedule desk();
  void validate() const;
};

/// Learning rate for 1-based `epoch`: base * min(1, epoch / warmup).
double warmup_learning_rate(double base, int epoch, int warmup_epochs);

/// Early-stopping rule armed after warm-up. From epoch warmup + 1 onwards the
/// best validation loss is tracked; training stops once `patience`
/// consecutive epochs fail to improve on it.
class EarlyStopping {
 public:
  EarlyStopping(int warmup_epochs, int patience);

  struct Decision {
    bool improved = false;  // caller snapshots the model
    bool stop = false;
  };

  Decision update(int epoch, double validation_loss);
  int best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_loss_; }

 private:
  int warmup_;
  int patience_;
  int wait_ = 0;
  int best_epoch_ = 0;
  double best_loss_ = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;       // Eq.-style summed loss, averaged per sample
  double validation_loss = 0.0;  // summed over the validation set
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int epochs_run = 0;
  int best_epoch = 0;
  bool early_stopped = false;
};

struct TrainRequest {
  const ModelConfig* model = nullptr;
  std::vector<const TaskDataset*> train;
  std::vector<const TaskDataset*> validation;
  TrainSchedule schedule;
  OptimizerConfig optimizer;
  LossOptions loss;
  std::uint64_t seed = 0;
  /// Restricts training and validation to one task's datasets.
  std::optional<TaskId> task_filter;
};

/// Per-epoch: shuffle, iterate batches, backprop the masked joint loss, Adam
/// step with the warm-up learning rate; then evaluate validation loss and
/// apply early stopping. The best-validation parameters are restored at the
/// end. Throws DivergenceError on a non-finite loss.
TrainHistory train_loop(MultiTaskParams& params, const TrainRequest& request);

/// Summed joint loss over datasets without recording gradients.
double evaluate_loss(const MultiTaskParams& params, const ModelConfig& config,
                     std::span<const TaskDataset* const> datasets, std::size_t batch_size,
                     const LossOptions& loss = {});

/// Argmax predictions of `task`'s head for every sample of `dataset`.
std::vector<int> predict(const MultiTaskParams& params, const ModelConfig& config, const TaskDataset& dataset,
                         std::size_t batch_size);

}  // namespace mdmt
