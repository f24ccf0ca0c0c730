#pragma once

#include <cstddef>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mdmt/data.hpp"
#include "mdmt/nn.hpp"
#include "mdmt/tensor.hpp"

namespace mdmt {

struct ConvBlock {
  std::size_t filters = 0;
  std::size_t kernel = 3;

  bool operator==(const ConvBlock&) const = default;
};

/// Shared feature extractor: per block conv (same padding, stride 1) ->
/// relu -> 2x2 max pool, then flatten.
struct BackboneConfig {
  std::string name = "small_cnn";
  std::size_t input_channels = 1;
  std::size_t input_size = 32;
  std::vector<ConvBlock> conv_blocks{{8, 3}, {16, 3}};

  /// Width of the flattened output.
  std::size_t feature_dim() const;
  void validate() const;
};

/// Fully connected head: hidden layers with relu, softmax output.
struct HeadConfig {
  TaskId task;
  std::vector<std::size_t> hidden{64};
  int num_classes = 2;

  void validate() const;
};

struct MultiTaskParams {
  ParamSet backbone;
  std::map<TaskId, ParamSet> heads;

  MultiTaskParams clone() const;
  /// Flattened as "backbone/<name>" and "head/<task>/<name>".
  ParamSet flatten() const;
  static MultiTaskParams unflatten(const ParamSet& flat);
  std::size_t parameter_count() const;
};

struct ModelConfig {
  BackboneConfig backbone;
  std::vector<HeadConfig> heads;

  const HeadConfig& head(const TaskId& task) const;
  bool has_head(const TaskId& task) const;
  std::vector<TaskId> tasks() const;
  void validate() const;
};

ParamSet init_backbone(const BackboneConfig& config, std::mt19937_64& rng);
ParamSet init_head(const HeadConfig& config, std::size_t feature_dim, std::mt19937_64& rng);
MultiTaskParams init_params(const ModelConfig& config, std::mt19937_64& rng);

/// Checks that `params` holds exactly the parameters `config` describes.
void check_params(const ModelConfig& config, const MultiTaskParams& params);

/// H = f^s(X; theta^s), one pass for the whole batch.
Tensor backbone_forward(Tape& tape, const Tensor& images, const ParamSet& backbone, const BackboneConfig& config);

/// O = f^tau(H; theta^tau); rows are probability vectors.
Tensor head_forward(Tape& tape, const Tensor& features, const ParamSet& head);

/// Runs the backbone once and every head on the shared features.
std::map<TaskId, Tensor> model_forward(Tape& tape, const Tensor& images, const MultiTaskParams& params,
                                       const ModelConfig& config);

/// 1 iff the sample belongs to `task`. Both tasks must be configured.
int indicator(const TaskId& sample_task, const TaskId& task, std::span<const TaskId> configured);
int indicator(const TaskSample& sample, const TaskId& task, std::span<const TaskId> configured);

inline constexpr double kProbabilityFloor = 1e-12;

/// -sum_k y_k log(clamp(o_k, 1e-12, 1)) for a one-hot y.
double cross_entropy(std::span<const double> probabilities, std::span<const double> one_hot);

struct LossOptions {
  /// Divide each task's term by its sample count in the batch. Off keeps the
  /// plain sum over the batch.
  bool per_task_mean = false;
};

/// Indicator-masked joint loss: sum over samples of the cross-entropy of the
/// head that matches each sample's task. Outputs of tasks without samples in
/// the batch contribute zero loss and zero gradient.
Tensor total_loss(Tape& tape, const MixedBatch& batch, const std::map<TaskId, Tensor>& outputs,
                  const LossOptions& options = {});

std::vector<int> argmax_rows(const Tensor& probabilities);

}  // namespace mdmt
