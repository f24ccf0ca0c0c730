#include "mdmt/model.hpp"

#include <algorithm>
#include <cmath>

#include "mdmt/errors.hpp"
#include "mdmt/ops.hpp"

namespace mdmt {
namespace {

constexpr const char* kBackbonePrefix = "backbone/";
constexpr const char* kHeadPrefix = "head/";

std::string conv_name(std::size_t i, const char* suffix) { return "conv" + std::to_string(i) + "." + suffix; }
std::string fc_name(std::size_t i, const char* suffix) { return "fc" + std::to_string(i) + "." + suffix; }

}  // namespace

std::size_t BackboneConfig::feature_dim() const {
  std::size_t size = input_size;
  std::size_t channels = input_channels;
  for (const auto& block : conv_blocks) {
    size = size / 2;
    channels = block.filters;
  }
  return channels * size * size;
}

void BackboneConfig::validate() const {
  if (input_channels < 1) throw ValidationError("model.input_channels must be at least 1");
  if (conv_blocks.empty()) throw ValidationError("model.conv_blocks needs at least one block");
  std::size_t size = input_size;
  for (std::size_t i = 0; i < conv_blocks.size(); ++i) {
    const auto& block = conv_blocks[i];
    if (block.filters < 1) throw ValidationError("model.conv_blocks[" + std::to_string(i) + "]: filters must be positive");
    if (block.kernel < 1 || block.kernel % 2 == 0) {
      throw ValidationError("model.conv_blocks[" + std::to_string(i) + "]: kernel must be odd and positive");
    }
    if (size < 2) {
      throw ValidationError("model.input_size " + std::to_string(input_size) + " too small for " +
                            std::to_string(conv_blocks.size()) + " pooled blocks");
    }
    size /= 2;
  }
}

void HeadConfig::validate() const {
  if (task.name.empty()) throw ValidationError("head task id is empty");
  if (num_classes < 2) throw ValidationError("head " + task.name + ": num_classes must be at least 2");
  for (std::size_t width : hidden) {
    if (width < 1) throw ValidationError("head " + task.name + ": hidden widths must be positive");
  }
}

MultiTaskParams MultiTaskParams::clone() const {
  MultiTaskParams copy;
  copy.backbone = backbone.clone();
  for (const auto& [task, head] : heads) copy.heads.emplace(task, head.clone());
  return copy;
}

ParamSet MultiTaskParams::flatten() const {
  ParamSet flat;
  for (const auto& [name, tensor] : backbone) flat.add(kBackbonePrefix + name, tensor);
  for (const auto& [task, head] : heads) {
    for (const auto& [name, tensor] : head) flat.add(kHeadPrefix + task.name + "/" + name, tensor);
  }
  return flat;
}

MultiTaskParams MultiTaskParams::unflatten(const ParamSet& flat) {
  MultiTaskParams params;
  const std::string backbone_prefix = kBackbonePrefix;
  const std::string head_prefix = kHeadPrefix;
  for (const auto& [name, tensor] : flat) {
    if (name.rfind(backbone_prefix, 0) == 0) {
      params.backbone.add(name.substr(backbone_prefix.size()), tensor);
    } else if (name.rfind(head_prefix, 0) == 0) {
      const std::string rest = name.substr(head_prefix.size());
      const auto slash = rest.find('/');
      if (slash == std::string::npos || slash == 0) throw IoError("checkpoint: malformed head parameter '" + name + "'");
      params.heads[TaskId{rest.substr(0, slash)}].add(rest.substr(slash + 1), tensor);
    } else {
      throw IoError("checkpoint: parameter '" + name + "' has no backbone/ or head/ prefix");
    }
  }
  return params;
}

std::size_t MultiTaskParams::parameter_count() const {
  std::size_t total = backbone.parameter_count();
  for (const auto& [task, head] : heads) total += head.parameter_count();
  return total;
}

const HeadConfig& ModelConfig::head(const TaskId& task) const {
  for (const auto& h : heads) {
    if (h.task == task) return h;
  }
  throw ContractError("model has no head for task '" + task.name + "'");
}

bool ModelConfig::has_head(const TaskId& task) const {
  return std::any_of(heads.begin(), heads.end(), [&](const HeadConfig& h) { return h.task == task; });
}

std::vector<TaskId> ModelConfig::tasks() const {
  std::vector<TaskId> out;
  for (const auto& h : heads) out.push_back(h.task);
  return out;
}

void ModelConfig::validate() const {
  backbone.validate();
  if (heads.empty()) throw ValidationError("model needs at least one head");
  for (std::size_t i = 0; i < heads.size(); ++i) {
    heads[i].validate();
    for (std::size_t j = 0; j < i; ++j) {
      if (heads[j].task == heads[i].task) throw ValidationError("duplicate head for task " + heads[i].task.name);
    }
  }
}

ParamSet init_backbone(const BackboneConfig& config, std::mt19937_64& rng) {
  config.validate();
  ParamSet params;
  std::size_t channels = config.input_channels;
  for (std::size_t i = 0; i < config.conv_blocks.size(); ++i) {
    const auto& block = config.conv_blocks[i];
    const std::size_t fan_in = channels * block.kernel * block.kernel;
    params.add(conv_name(i, "weight"), kaiming_uniform({block.filters, channels, block.kernel, block.kernel}, fan_in, rng));
    params.add(conv_name(i, "bias"), Tensor::zeros({block.filters}, true));
    channels = block.filters;
  }
  return params;
}

ParamSet init_head(const HeadConfig& config, std::size_t feature_dim, std::mt19937_64& rng) {
  config.validate();
  ParamSet params;
  std::size_t width = feature_dim;
  std::vector<std::size_t> widths = config.hidden;
  widths.push_back(static_cast<std::size_t>(config.num_classes));
  for (std::size_t i = 0; i < widths.size(); ++i) {
    params.add(fc_name(i, "weight"), kaiming_uniform({width, widths[i]}, width, rng));
    params.add(fc_name(i, "bias"), Tensor::zeros({widths[i]}, true));
    width = widths[i];
  }
  return params;
}

MultiTaskParams init_params(const ModelConfig& config, std::mt19937_64& rng) {
  config.validate();
  MultiTaskParams params;
  params.backbone = init_backbone(config.backbone, rng);
  for (const auto& head : config.heads) params.heads.emplace(head.task, init_head(head, config.backbone.feature_dim(), rng));
  return params;
}

void check_params(const ModelConfig& config, const MultiTaskParams& params) {
  std::mt19937_64 scratch(0);
  MultiTaskParams expected = init_params(config, scratch);
  if (!shape_compatible(expected.backbone, params.backbone)) {
    throw ValidationError("backbone parameters do not match the configured architecture");
  }
  if (expected.heads.size() != params.heads.size()) {
    throw ValidationError("expected " + std::to_string(expected.heads.size()) + " heads, found " +
                          std::to_string(params.heads.size()));
  }
  for (const auto& [task, head] : expected.heads) {
    auto it = params.heads.find(task);
    if (it == params.heads.end()) throw ValidationError("missing head for task " + task.name);
    if (!shape_compatible(head, it->second)) {
      throw ValidationError("head " + task.name + " parameters do not match the configured architecture");
    }
  }
}

Tensor backbone_forward(Tape& tape, const Tensor& images, const ParamSet& backbone, const BackboneConfig& config) {
  if (images.rank() != 4 || images.dim(1) != config.input_channels || images.dim(2) != config.input_size ||
      images.dim(3) != config.input_size) {
    throw DimensionError("backbone_forward: input " + shape_string(images.shape()) + " does not match [N x " +
                         std::to_string(config.input_channels) + " x " + std::to_string(config.input_size) + " x " +
                         std::to_string(config.input_size) + "]");
  }
  Tensor x = images;
  for (std::size_t i = 0; i < config.conv_blocks.size(); ++i) {
    const std::size_t padding = config.conv_blocks[i].kernel / 2;
    x = ops::conv2d(tape, x, backbone.at(conv_name(i, "weight")), backbone.at(conv_name(i, "bias")), 1, padding);
    x = ops::relu(tape, x);
    x = ops::maxpool2d(tape, x);
  }
  return ops::flatten(tape, x);
}

Tensor head_forward(Tape& tape, const Tensor& features, const ParamSet& head) {
  const std::size_t layers = head.size() / 2;
  if (layers == 0 || head.size() % 2 != 0) throw ContractError("head_forward: malformed head parameter set");
  const Tensor& first = head.at(fc_name(0, "weight"));
  if (features.rank() != 2 || features.dim(1) != first.dim(0)) {
    throw DimensionError("head_forward: features " + shape_string(features.shape()) + " do not match head input width " +
                         std::to_string(first.dim(0)));
  }
  Tensor x = features;
  for (std::size_t i = 0; i < layers; ++i) {
    x = linear_forward(tape, x, head.at(fc_name(i, "weight")), head.at(fc_name(i, "bias")));
    if (i + 1 < layers) x = ops::relu(tape, x);
  }
  return ops::softmax(tape, x);
}

std::map<TaskId, Tensor> model_forward(Tape& tape, const Tensor& images, const MultiTaskParams& params,
                                       const ModelConfig& config) {
  const Tensor features = backbone_forward(tape, images, params.backbone, config.backbone);
  std::map<TaskId, Tensor> outputs;
  for (const auto& head : config.heads) {
    auto it = params.heads.find(head.task);
    if (it == params.heads.end()) throw ContractError("model_forward: no parameters for head " + head.task.name);
    outputs.emplace(head.task, head_forward(tape, features, it->second));
  }
  return outputs;
}

int indicator(const TaskId& sample_task, const TaskId& task, std::span<const TaskId> configured) {
  auto known = [&](const TaskId& t) { return std::find(configured.begin(), configured.end(), t) != configured.end(); };
  if (!known(task)) throw ContractError("indicator: unknown task '" + task.name + "'");
  if (!known(sample_task)) throw ContractError("indicator: sample has unknown task '" + sample_task.name + "'");
  return sample_task == task ? 1 : 0;
}

int indicator(const TaskSample& sample, const TaskId& task, std::span<const TaskId> configured) {
  return indicator(sample.task, task, configured);
}

double cross_entropy(std::span<const double> probabilities, std::span<const double> one_hot) {
  if (probabilities.size() != one_hot.size()) {
    throw DimensionError("cross_entropy: " + std::to_string(probabilities.size()) + " probabilities vs " +
                         std::to_string(one_hot.size()) + " label entries");
  }
  std::size_t hot = 0;
  for (double y : one_hot) {
    if (y == 1.0) {
      ++hot;
    } else if (y != 0.0) {
      throw ContractError("cross_entropy: label is not one-hot");
    }
  }
  if (hot != 1) throw ContractError("cross_entropy: label is not one-hot");
  double loss = 0.0;
  for (std::size_t k = 0; k < one_hot.size(); ++k) {
    if (one_hot[k] != 0.0) loss -= one_hot[k] * std::log(std::clamp(probabilities[k], kProbabilityFloor, 1.0));
  }
  return loss;
}

Tensor total_loss(Tape& tape, const MixedBatch& batch, const std::map<TaskId, Tensor>& outputs,
                  const LossOptions& options) {
  const std::size_t n = batch.size();
  if (n == 0) throw ContractError("total_loss: empty batch");
  std::vector<TaskId> configured;
  for (const auto& [task, output] : outputs) configured.push_back(task);
  for (std::size_t i = 0; i < n; ++i) {
    if (!outputs.count(batch.tasks[i])) {
      throw ContractError("total_loss: sample '" + batch.sample_ids[i] + "' has task '" + batch.tasks[i].name +
                          "' with no head output");
    }
  }

  Tensor total;
  for (const auto& [task, output] : outputs) {
    if (output.rank() != 2 || output.dim(0) != n) {
      throw DimensionError("total_loss: output of " + task.name + " has shape " + shape_string(output.shape()) +
                           " for a batch of " + std::to_string(n));
    }
    const std::size_t classes = output.dim(1);
    // Row i holds indicator(X_i, task) * Y_i.
    Buffer mask(n * classes, 0.0);
    std::size_t members = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (indicator(batch.tasks[i], task, configured) == 0) continue;
      if (static_cast<std::size_t>(batch.num_classes[i]) != classes) {
        throw DimensionError("total_loss: sample '" + batch.sample_ids[i] + "' has " +
                             std::to_string(batch.num_classes[i]) + " classes but head " + task.name + " outputs " +
                             std::to_string(classes));
      }
      mask[i * classes + static_cast<std::size_t>(batch.labels[i])] = 1.0;
      ++members;
    }
    if (options.per_task_mean && members > 0) {
      for (double& m : mask) m /= static_cast<double>(members);
    }
    const Tensor log_probs = ops::log(tape, ops::clamp(tape, output, kProbabilityFloor, 1.0));
    const Tensor term = ops::sum(tape, ops::mul(tape, Tensor(output.shape(), std::move(mask)), log_probs));
    total = total.defined() ? ops::add(tape, total, term) : term;
  }
  return ops::scale(tape, total, -1.0);
}

std::vector<int> argmax_rows(const Tensor& probabilities) {
  if (probabilities.rank() != 2) throw DimensionError("argmax_rows: expected a matrix");
  const std::size_t rows = probabilities.dim(0), cols = probabilities.dim(1);
  std::vector<int> out(rows);
  const auto values = probabilities.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = values.data() + r * cols;
    out[r] = static_cast<int>(std::max_element(row, row + cols) - row);
  }
  return out;
}

}  // namespace mdmt
