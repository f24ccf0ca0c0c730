#include "mdmt/nn.hpp"

#include <algorithm>
#include <cmath>

#include "mdmt/errors.hpp"
#include "mdmt/ops.hpp"

namespace mdmt {

void ParamSet::add(std::string name, Tensor tensor) {
  if (contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(tensor));
}

bool ParamSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.first == name; });
}

const Tensor& ParamSet::at(const std::string& name) const {
  for (const auto& [key, tensor] : entries_) {
    if (key == name) return tensor;
  }
  throw ContractError("unknown parameter '" + name + "'");
}

Tensor& ParamSet::at(const std::string& name) {
  return const_cast<Tensor&>(static_cast<const ParamSet&>(*this).at(name));
}

std::size_t ParamSet::parameter_count() const {
  std::size_t total = 0;
  for (const auto& entry : entries_) total += entry.second.numel();
  return total;
}

ParamSet ParamSet::clone() const {
  ParamSet copy;
  for (const auto& [name, tensor] : entries_) {
    const auto values = tensor.data();
    copy.add(name, Tensor(tensor.shape(), Buffer(values.begin(), values.end()), tensor.requires_grad()));
  }
  return copy;
}

std::vector<Tensor> ParamSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& entry : entries_) out.push_back(entry.second);
  return out;
}

void ParamSet::clear_grads() const {
  for (const auto& entry : entries_) entry.second.clear_grad();
}

bool shape_compatible(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) return false;
  return std::equal(a.begin(), a.end(), b.begin(), [](const ParamSet::Entry& x, const ParamSet::Entry& y) {
    return x.first == y.first && x.second.shape() == y.second.shape();
  });
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("optimizer.learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ValidationError("optimizer.beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("optimizer.beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ValidationError("optimizer.epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw ValidationError("optimizer.weight_decay must be non-negative");
}

AdamState AdamState::for_params(const ParamSet& params) {
  AdamState state;
  for (const auto& [name, tensor] : params) {
    state.first_moment.emplace_back(tensor.numel(), 0.0);
    state.second_moment.emplace_back(tensor.numel(), 0.0);
  }
  return state;
}

void adam_step(ParamSet& params, AdamState& state, const OptimizerConfig& config) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ContractError("adam_step: optimizer state does not match parameter set");
  }
  std::size_t index = 0;
  for (const auto& [name, tensor] : params) {
    if (!tensor.has_grad()) throw ContractError("adam_step: parameter '" + name + "' has no gradient");
    if (state.first_moment[index].size() != tensor.numel()) {
      throw ContractError("adam_step: moment shape mismatch for parameter '" + name + "'");
    }
    ++index;
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double first_correction = 1.0 - std::pow(config.beta1, t);
  const double second_correction = 1.0 - std::pow(config.beta2, t);

  index = 0;
  for (auto& [name, tensor] : params) {
    auto theta = tensor.mutable_data();
    const auto grad = tensor.grad();
    auto& m = state.first_moment[index];
    auto& v = state.second_moment[index];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i] + config.weight_decay * theta[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = m[i] / first_correction;
      const double v_hat = v[i] / second_correction;
      theta[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
    tensor.clear_grad();
    ++index;
  }
}

Tensor linear_forward(Tape& tape, const Tensor& input, const Tensor& weights, const Tensor& bias) {
  return ops::add_bias(tape, ops::matmul(tape, input, weights), bias);
}

ParamSet average_weights(const ParamSet& a, const ParamSet& b) {
  auto it_b = b.begin();
  for (const auto& [name, tensor] : a) {
    if (it_b == b.end()) throw ContractError("average_weights: parameter '" + name + "' missing from second set");
    if (it_b->first != name || it_b->second.shape() != tensor.shape()) {
      throw ContractError("average_weights: parameter '" + name + "' is not shape-compatible with '" + it_b->first +
                          "' " + shape_string(it_b->second.shape()));
    }
    ++it_b;
  }
  if (it_b != b.end()) {
    throw ContractError("average_weights: parameter '" + it_b->first + "' missing from first set");
  }

  ParamSet result;
  it_b = b.begin();
  for (const auto& [name, tensor] : a) {
    const auto x = tensor.data();
    const auto y = it_b->second.data();
    Buffer mean(x.size());
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = 0.5 * (x[i] + y[i]);
    result.add(name, Tensor(tensor.shape(), std::move(mean), true));
    ++it_b;
  }
  return result;
}

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Buffer values(shape_numel(shape));
  for (double& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values), true);
}

std::uint64_t mix_seed(std::uint64_t value) {
  value += 0x9e3779b97f4a7c15ULL;
  value = (value ^ (value >> 30)) * 0xbf58476d1ce4e5b9ULL;
  value = (value ^ (value >> 27)) * 0x94d049bb133111ebULL;
  return value ^ (value >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) { return mix_seed(mix_seed(base) ^ salt); }

}  // namespace mdmt
