#include "mdmt/training.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mdmt/errors.hpp"

namespace mdmt {

TrainSchedule TrainSchedule::full() {
  TrainSchedule s;
  s.max_epochs = kFullMaxEpochs;
  s.warmup_epochs = kFullWarmupEpochs;
  s.patience = kFullPatience;
  s.batch_size = kFullBatchSize;
  return s;
}

TrainSchedule TrainSchedule::desk() { return TrainSchedule{}; }

void TrainSchedule::validate() const {
  if (max_epochs < 1) throw ValidationError("train.max_epochs must be at least 1");
  if (warmup_epochs < 0) throw ValidationError("train.warmup_epochs must be non-negative");
  if (warmup_epochs >= max_epochs) throw ValidationError("train.warmup_epochs must be smaller than train.max_epochs");
  if (patience < 1) throw ValidationError("train.patience must be at least 1");
  if (batch_size < 1) throw ValidationError("train.batch_size must be at least 1");
  if (eval_batch_size < 1) throw ValidationError("train.eval_batch_size must be at least 1");
}

double warmup_learning_rate(double base, int epoch, int warmup_epochs) {
  if (warmup_epochs <= 0 || epoch >= warmup_epochs) return base;
  return base * static_cast<double>(epoch) / static_cast<double>(warmup_epochs);
}

EarlyStopping::EarlyStopping(int warmup_epochs, int patience) : warmup_(warmup_epochs), patience_(patience) {
  if (patience < 1) throw ContractError("early stopping patience must be at least 1");
}

EarlyStopping::Decision EarlyStopping::update(int epoch, double validation_loss) {
  Decision decision;
  if (epoch <= warmup_) return decision;
  if (best_epoch_ == 0 || validation_loss < best_loss_) {
    best_loss_ = validation_loss;
    best_epoch_ = epoch;
    wait_ = 0;
    decision.improved = true;
    return decision;
  }
  ++wait_;
  decision.stop = wait_ >= patience_;
  return decision;
}

namespace {

std::vector<const TaskDataset*> select(const std::vector<const TaskDataset*>& datasets,
                                       const std::optional<TaskId>& filter) {
  std::vector<const TaskDataset*> out;
  for (const auto* d : datasets) {
    if (d == nullptr) continue;
    if (filter && d->task != *filter) continue;
    out.push_back(d);
  }
  return out;
}

}  // namespace

double evaluate_loss(const MultiTaskParams& params, const ModelConfig& config,
                     std::span<const TaskDataset* const> datasets, std::size_t batch_size, const LossOptions& loss) {
  double total = 0.0;
  for (const auto& batch : sequential_batches(datasets, batch_size)) {
    Tape tape(false);
    const auto outputs = model_forward(tape, batch.images, params, config);
    total += total_loss(tape, batch, outputs, loss).item();
  }
  return total;
}

std::vector<int> predict(const MultiTaskParams& params, const ModelConfig& config, const TaskDataset& dataset,
                         std::size_t batch_size) {
  auto head = params.heads.find(dataset.task);
  if (head == params.heads.end()) throw ContractError("predict: model has no head for task " + dataset.task.name);
  std::vector<int> predictions;
  predictions.reserve(dataset.size());
  const TaskDataset* sources[] = {&dataset};
  for (const auto& batch : sequential_batches(sources, batch_size)) {
    Tape tape(false);
    const Tensor features = backbone_forward(tape, batch.images, params.backbone, config.backbone);
    const auto rows = argmax_rows(head_forward(tape, features, head->second));
    predictions.insert(predictions.end(), rows.begin(), rows.end());
  }
  return predictions;
}

TrainHistory train_loop(MultiTaskParams& params, const TrainRequest& request) {
  if (request.model == nullptr) throw ContractError("train_loop: no model configuration");
  const ModelConfig& config = *request.model;
  request.schedule.validate();
  request.optimizer.validate();
  check_params(config, params);

  const auto train = select(request.train, request.task_filter);
  const auto validation = select(request.validation, request.task_filter);
  if (train.empty()) throw ContractError("train_loop: no training data after task filtering");
  for (const auto* d : train) {
    if (!config.has_head(d->task)) throw ContractError("train_loop: no head for training task " + d->task.name);
  }

  MixedBatchSampler sampler(train, request.schedule.batch_size, derive_seed(request.seed, 0xba7c4),
                            request.schedule.balanced_batches);

  AdamState backbone_state = AdamState::for_params(params.backbone);
  std::map<TaskId, AdamState> head_states;
  for (const auto& [task, head] : params.heads) head_states.emplace(task, AdamState::for_params(head));

  EarlyStopping stopping(request.schedule.warmup_epochs, request.schedule.patience);
  std::optional<MultiTaskParams> best;
  TrainHistory history;

  for (int epoch = 1; epoch <= request.schedule.max_epochs; ++epoch) {
    OptimizerConfig step_config = request.optimizer;
    step_config.learning_rate =
        warmup_learning_rate(request.optimizer.learning_rate, epoch, request.schedule.warmup_epochs);

    double epoch_loss = 0.0;
    std::size_t epoch_samples = 0;
    int batch_index = 0;
    for (const auto& refs : sampler.epoch()) {
      ++batch_index;
      const MixedBatch batch = sampler.materialize(refs);
      Tape tape;
      const auto outputs = model_forward(tape, batch.images, params, config);
      const Tensor loss = total_loss(tape, batch, outputs, request.loss);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw DivergenceError(epoch, batch_index,
                              "training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                  std::to_string(batch_index));
      }
      backward(loss, tape);

      // Only heads of tasks present in the batch take a step; the others
      // received an exactly-zero gradient through the indicator mask.
      std::set<TaskId> present(batch.tasks.begin(), batch.tasks.end());
      adam_step(params.backbone, backbone_state, step_config);
      for (auto& [task, head] : params.heads) {
        if (present.count(task)) {
          adam_step(head, head_states.at(task), step_config);
        } else {
          head.clear_grads();
        }
      }
      epoch_loss += value;
      epoch_samples += batch.size();
    }

    EpochRecord record;
    record.epoch = epoch;
    record.learning_rate = step_config.learning_rate;
    record.train_loss = epoch_loss / static_cast<double>(epoch_samples);
    record.validation_loss =
        validation.empty() ? record.train_loss
                           : evaluate_loss(params, config, validation, request.schedule.eval_batch_size, request.loss);
    if (!std::isfinite(record.validation_loss)) {
      throw DivergenceError(epoch, 0, "training diverged: non-finite validation loss at epoch " + std::to_string(epoch));
    }
    history.epochs.push_back(record);
    history.epochs_run = epoch;

    const auto decision = stopping.update(epoch, record.validation_loss);
    if (decision.improved) best = params.clone();
    if (decision.stop) {
      history.early_stopped = true;
      break;
    }
  }

  if (best) {
    params = std::move(*best);
    history.best_epoch = stopping.best_epoch();
  } else {
    history.best_epoch = history.epochs_run;
  }
  return history;
}

}  // namespace mdmt
