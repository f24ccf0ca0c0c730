#pragma once

#include <cstddef>

#include "mdmt/tensor.hpp"

// Differentiable tensor operations. Every op takes the tape that records it;
// pass a non-recording tape for inference.
namespace mdmt::ops {

/// [m x k] * [k x n] -> [m x n].
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

/// Elementwise ops on identically shaped operands.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);

/// x[N x d] + bias[d], broadcast over the batch axis.
Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias);

/// Sum of all elements, shape [1].
Tensor sum(Tape& tape, const Tensor& a);

/// Natural log; every element must be positive.
Tensor log(Tape& tape, const Tensor& a);

/// Clamps into [lo, hi]; the gradient passes where lo <= x <= hi.
Tensor clamp(Tape& tape, const Tensor& a, double lo, double hi);

Tensor relu(Tape& tape, const Tensor& a);

/// Cross-correlation of input[N x C x H x W] with kernel[F x C x k x k].
/// `bias` is optional (undefined Tensor) or shape [F].
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding);

inline Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel, std::size_t stride,
                     std::size_t padding) {
  return conv2d(tape, input, kernel, Tensor{}, stride, padding);
}

std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride, std::size_t padding);

/// 2x2 max pooling with stride 2 over the last two axes of an NCHW tensor;
/// odd trailing rows/columns are dropped.
Tensor maxpool2d(Tape& tape, const Tensor& input);

/// [N x ...] -> [N x rest].
Tensor flatten(Tape& tape, const Tensor& input);

/// Softmax over the last axis, computed with max subtraction.
Tensor softmax(Tape& tape, const Tensor& logits);

}  // namespace mdmt::ops
