#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mdmt/tensor.hpp"

namespace mdmt {

/// Named, ordered collection of trainable tensors.
class ParamSet {
 public:
  using Entry = std::pair<std::string, Tensor>;

  void add(std::string name, Tensor tensor);
  bool contains(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t parameter_count() const;

  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  /// Deep copy: new storage, same values, requires_grad preserved, no grads.
  ParamSet clone() const;
  std::vector<Tensor> tensors() const;

  void clear_grads() const;

 private:
  std::vector<Entry> entries_;
};

/// Same names in the same order with identical per-name shapes.
bool shape_compatible(const ParamSet& a, const ParamSet& b);

struct OptimizerConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0001;

  void validate() const;
};

struct AdamState {
  std::vector<Buffer> first_moment;
  std::vector<Buffer> second_moment;
  std::uint64_t step = 0;

  static AdamState for_params(const ParamSet& params);
};

/// One Adam update with bias correction. Weight decay is added to the
/// gradient (g + wd * theta) before the moment updates. Gradients are
/// cleared afterwards.
void adam_step(ParamSet& params, AdamState& state, const OptimizerConfig& config);

/// input[N x d_in] * weights[d_in x d_out] + bias[d_out].
Tensor linear_forward(Tape& tape, const Tensor& input, const Tensor& weights, const Tensor& bias);

/// Elementwise mean of two shape-compatible parameter sets.
ParamSet average_weights(const ParamSet& a, const ParamSet& b);

/// U(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
Tensor kaiming_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t value);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt);

}  // namespace mdmt
