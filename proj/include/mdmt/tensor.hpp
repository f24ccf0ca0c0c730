#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mdmt {

using Shape = std::vector<std::size_t>;

// 64-byte aligned storage so vectorized kernels see the same alignment on
// every run.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor of doubles with an optional gradient slot.
///
/// A Tensor is a cheap handle; copies share the same storage. Values are
/// treated as immutable once produced by an operation. Parameters are the
/// exception: the optimizer updates them in place through mutable_data().
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, Buffer data, bool requires_grad = false);
  Tensor(Shape shape, std::initializer_list<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  std::span<const double> grad() const;
  /// Allocates a zero-filled gradient on first access.
  std::span<double> mutable_grad() const;
  void zero_grad() const;
  void clear_grad() const;

  /// Same values, fresh storage, no gradient tracking.
  Tensor detach() const;

  bool same_object(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    Buffer data;
    bool requires_grad = false;
    Buffer grad;
    bool has_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/// Local backward rule: receives the gradient of the node's output and
/// accumulates into the gradients of its inputs.
using BackwardFn = std::function<void(std::span<const double> grad_output)>;

/// Ordered record of operations executed during a forward pass.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Records `output = op(inputs)` if any input requires a gradient. Marks
  /// the output as requiring a gradient in that case.
  void record(std::vector<Tensor> inputs, Tensor& output, BackwardFn backward);

  static bool any_requires_grad(std::initializer_list<const Tensor*> inputs);

 private:
  friend void backward(const Tensor& loss, Tape& tape);

  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  bool recording_;
  std::vector<Node> nodes_;
};

/// Reverse pass over the tape. Gradients accumulate into every tensor that
/// requires one; callers clear parameter gradients between steps.
void backward(const Tensor& loss, Tape& tape);

}  // namespace mdmt
