#include "mdmt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "mdmt/errors.hpp"

namespace mdmt::ops {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

ConstMatrixMap as_matrix(std::span<const double> values, std::size_t rows, std::size_t cols) {
  return ConstMatrixMap(values.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MatrixMap as_matrix(std::span<double> values, std::size_t rows, std::size_t cols) {
  return MatrixMap(values.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_string(t.shape()));
  }
}

Buffer copy_of(std::span<const double> values) { return Buffer(values.begin(), values.end()); }

// Output positions o in [lo, hi) whose input index o * stride + offset - padding
// lies inside [0, extent).
struct Range {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

Range valid_outputs(std::size_t offset, std::size_t stride, std::size_t padding, std::size_t extent,
                    std::size_t out_extent) {
  Range r;
  r.lo = offset >= padding ? 0 : (padding - offset + stride - 1) / stride;
  // largest o with o * stride + offset - padding <= extent - 1
  const std::size_t limit = extent - 1 + padding;
  r.hi = limit < offset ? 0 : std::min(out_extent, (limit - offset) / stride + 1);
  if (r.hi < r.lo) r.hi = r.lo;
  return r;
}

struct ConvGeometry {
  std::size_t c, h, w, k, stride, padding, oh, ow;
};

// Column matrix of one image: row (ci, ki, kj), column (y, x); zero where the
// window reaches into the padding.
void im2col(const ConvGeometry& g, const double* image, double* columns) {
  const std::size_t positions = g.oh * g.ow;
  std::fill(columns, columns + g.c * g.k * g.k * positions, 0.0);
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    const double* plane = image + ci * g.h * g.w;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      const Range ys = valid_outputs(ki, g.stride, g.padding, g.h, g.oh);
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const Range xs = valid_outputs(kj, g.stride, g.padding, g.w, g.ow);
        double* row = columns + ((ci * g.k + ki) * g.k + kj) * positions;
        for (std::size_t y = ys.lo; y < ys.hi; ++y) {
          const double* src = plane + (y * g.stride + ki - g.padding) * g.w;
          double* dst = row + y * g.ow;
          for (std::size_t x = xs.lo; x < xs.hi; ++x) dst[x] = src[x * g.stride + kj - g.padding];
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the image gradient.
void col2im_add(const ConvGeometry& g, const double* columns, double* image_grad) {
  const std::size_t positions = g.oh * g.ow;
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    double* plane = image_grad + ci * g.h * g.w;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      const Range ys = valid_outputs(ki, g.stride, g.padding, g.h, g.oh);
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const Range xs = valid_outputs(kj, g.stride, g.padding, g.w, g.ow);
        const double* row = columns + ((ci * g.k + ki) * g.k + kj) * positions;
        for (std::size_t y = ys.lo; y < ys.hi; ++y) {
          double* dst = plane + (y * g.stride + ki - g.padding) * g.w;
          const double* src = row + y * g.ow;
          for (std::size_t x = xs.lo; x < xs.hi; ++x) dst[x * g.stride + kj - g.padding] += src[x];
        }
      }
    }
  }
}

// Elementwise unary op with a derivative computed from the input value.
template <typename Forward, typename Derivative>
Tensor unary(Tape& tape, const Tensor& a, Forward forward, Derivative derivative) {
  Buffer out(a.numel());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
  Tensor result(a.shape(), std::move(out));
  if (tape.recording() && a.requires_grad()) {
    tape.record({a}, result, [a, derivative](std::span<const double> grad_out) {
      const double* __restrict x = a.data().data();
      const double* __restrict dy = grad_out.data();
      auto grad = a.mutable_grad();
      double* __restrict g = grad.data();
      const std::size_t size = grad.size();
      for (std::size_t i = 0; i < size; ++i) g[i] += dy[i] * derivative(x[i]);
    });
  }
  return result;
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Buffer out(m * n);
  as_matrix(std::span<double>(out), m, n).noalias() = as_matrix(a.data(), m, k) * as_matrix(b.data(), k, n);
  Tensor result({m, n}, std::move(out));
  if (tape.recording() && Tape::any_requires_grad({&a, &b})) {
    tape.record({a, b}, result, [a, b, m, k, n](std::span<const double> grad_out) {
      const auto dc = as_matrix(grad_out, m, n);
      if (a.requires_grad()) {
        as_matrix(a.mutable_grad(), m, k).noalias() += dc * as_matrix(b.data(), k, n).transpose();
      }
      if (b.requires_grad()) {
        as_matrix(b.mutable_grad(), k, n).noalias() += as_matrix(a.data(), m, k).transpose() * dc;
      }
    });
  }
  return result;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Buffer out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  Tensor result(a.shape(), std::move(out));
  if (tape.recording() && Tape::any_requires_grad({&a, &b})) {
    tape.record({a, b}, result, [a, b](std::span<const double> grad_out) {
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto g = t->mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad_out[i];
      }
    });
  }
  return result;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Buffer out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  Tensor result(a.shape(), std::move(out));
  if (tape.recording() && Tape::any_requires_grad({&a, &b})) {
    tape.record({a, b}, result, [a, b](std::span<const double> grad_out) {
      if (a.requires_grad()) {
        auto g = a.mutable_grad();
        const auto y = b.data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad_out[i] * y[i];
      }
      if (b.requires_grad()) {
        auto g = b.mutable_grad();
        const auto x = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad_out[i] * x[i];
      }
    });
  }
  return result;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  return unary(
      tape, a, [factor](double x) { return factor * x; }, [factor](double) { return factor; });
}

Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
  require_rank("add_bias", x, 2);
  if (bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match input " +
                         shape_string(x.shape()));
  }
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Buffer out(x.numel());
  const auto in = x.data(), b = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = in[r * cols + c] + b[c];
  }
  Tensor result(x.shape(), std::move(out));
  if (tape.recording() && Tape::any_requires_grad({&x, &bias})) {
    tape.record({x, bias}, result, [x, bias, rows, cols](std::span<const double> grad_out) {
      if (x.requires_grad()) {
        auto g = x.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad_out[i];
      }
      if (bias.requires_grad()) {
        auto g = bias.mutable_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) g[c] += grad_out[r * cols + c];
        }
      }
    });
  }
  return result;
}

Tensor sum(Tape& tape, const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  Tensor result({1}, {total});
  if (tape.recording() && a.requires_grad()) {
    tape.record({a}, result, [a](std::span<const double> grad_out) {
      auto g = a.mutable_grad();
      for (double& v : g) v += grad_out[0];
    });
  }
  return result;
}

Tensor log(Tape& tape, const Tensor& a) {
  for (double v : a.data()) {
    // NaN passes through so that divergence is reported by the training loop.
    if (v <= 0.0) throw ContractError("log: input must be strictly positive, got " + std::to_string(v));
  }
  return unary(
      tape, a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Tensor clamp(Tape& tape, const Tensor& a, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp: lower bound exceeds upper bound");
  return unary(
      tape, a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x) { return static_cast<double>(x >= lo) * static_cast<double>(x <= hi); });
}

Tensor relu(Tape& tape, const Tensor& a) {
  Buffer out(a.numel());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(in[i], 0.0);
  Tensor result(a.shape(), std::move(out));
  if (tape.recording() && a.requires_grad()) {
    tape.record({a}, result, [a](std::span<const double> grad_out) {
      const double* __restrict x = a.data().data();
      const double* __restrict dy = grad_out.data();
      auto grad = a.mutable_grad();
      double* __restrict g = grad.data();
      const std::size_t size = grad.size();
      // Written as a select so it compiles to a blend, not a branch per element.
      for (std::size_t i = 0; i < size; ++i) g[i] += x[i] > 0.0 ? dy[i] : 0.0;
    });
  }
  return result;
}

std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  if (extent + 2 * padding < kernel) {
    throw DimensionError("conv2d: kernel " + std::to_string(kernel) + " larger than padded extent " +
                         std::to_string(extent + 2 * padding));
  }
  return (extent + 2 * padding - kernel) / stride + 1;
}

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require_rank("conv2d input", input, 4);
  require_rank("conv2d kernel", kernel, 4);
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t f = kernel.dim(0), k = kernel.dim(2);
  if (kernel.dim(1) != c || kernel.dim(3) != k) {
    throw DimensionError("conv2d: kernel " + shape_string(kernel.shape()) + " incompatible with input " +
                         shape_string(input.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != f)) {
    throw DimensionError("conv2d: bias " + shape_string(bias.shape()) + " does not match " + std::to_string(f) +
                         " filters");
  }
  const std::size_t oh = conv_output_extent(h, k, stride, padding);
  const std::size_t ow = conv_output_extent(w, k, stride, padding);
  const ConvGeometry geo{c, h, w, k, stride, padding, oh, ow};
  const std::size_t patch = c * k * k;
  const std::size_t positions = oh * ow;

  // One image at a time: its column matrix [patch x positions] stays in
  // cache and its output block [f x positions] is contiguous in NCHW.
  Buffer out(n * f * positions);
  {
    Buffer columns(patch * positions);
    const auto weights = as_matrix(kernel.data(), f, patch);
    const auto in = input.data();
    for (std::size_t ni = 0; ni < n; ++ni) {
      im2col(geo, in.data() + ni * c * h * w, columns.data());
      auto block = as_matrix(std::span<double>(out.data() + ni * f * positions, f * positions), f, positions);
      block.noalias() = weights * as_matrix(std::span<const double>(columns), patch, positions);
      if (has_bias) {
        const auto b = bias.data();
        for (std::size_t fi = 0; fi < f; ++fi) {
          double* row = out.data() + (ni * f + fi) * positions;
          for (std::size_t p = 0; p < positions; ++p) row[p] += b[fi];
        }
      }
    }
  }
  Tensor result({n, f, oh, ow}, std::move(out));

  std::vector<Tensor> inputs{input, kernel};
  if (has_bias) inputs.push_back(bias);
  const bool needs_grad = input.requires_grad() || kernel.requires_grad() || (has_bias && bias.requires_grad());
  if (!tape.recording() || !needs_grad) return result;

  tape.record(std::move(inputs), result, [=](std::span<const double> grad_out) {
    Buffer columns(patch * positions);
    Buffer dcolumns(patch * positions);
    const auto weights = as_matrix(kernel.data(), f, patch);
    const auto in = input.data();
    for (std::size_t ni = 0; ni < n; ++ni) {
      const auto dout = as_matrix(grad_out.subspan(ni * f * positions, f * positions), f, positions);
      if (kernel.requires_grad()) {
        im2col(geo, in.data() + ni * c * h * w, columns.data());
        as_matrix(kernel.mutable_grad(), f, patch).noalias() +=
            dout * as_matrix(std::span<const double>(columns), patch, positions).transpose();
      }
      if (has_bias && bias.requires_grad()) {
        auto g = bias.mutable_grad();
        for (std::size_t fi = 0; fi < f; ++fi) {
          const double* row = grad_out.data() + (ni * f + fi) * positions;
          double acc = 0.0;
          for (std::size_t p = 0; p < positions; ++p) acc += row[p];
          g[fi] += acc;
        }
      }
      if (input.requires_grad()) {
        as_matrix(std::span<double>(dcolumns), patch, positions).noalias() = weights.transpose() * dout;
        col2im_add(geo, dcolumns.data(), input.mutable_grad().data() + ni * c * h * w);
      }
    }
  });
  return result;
}

Tensor maxpool2d(Tape& tape, const Tensor& input) {
  require_rank("maxpool2d", input, 4);
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h < 2 || w < 2) throw DimensionError("maxpool2d: input " + shape_string(input.shape()) + " smaller than 2x2");
  const std::size_t oh = h / 2, ow = w / 2;
  Buffer out(n * c * oh * ow);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto in = input.data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = base + (2 * y) * w + 2 * x;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = base + (2 * y + dy) * w + 2 * x + dx;
            if (in[idx] > in[best]) best = idx;
          }
        }
        const std::size_t o = (plane * oh + y) * ow + x;
        out[o] = in[best];
        (*argmax)[o] = best;
      }
    }
  }
  Tensor result({n, c, oh, ow}, std::move(out));
  if (tape.recording() && input.requires_grad()) {
    tape.record({input}, result, [input, argmax](std::span<const double> grad_out) {
      auto g = input.mutable_grad();
      for (std::size_t o = 0; o < grad_out.size(); ++o) g[(*argmax)[o]] += grad_out[o];
    });
  }
  return result;
}

Tensor flatten(Tape& tape, const Tensor& input) {
  const std::size_t n = input.dim(0);
  Tensor result({n, input.numel() / n}, copy_of(input.data()));
  if (tape.recording() && input.requires_grad()) {
    tape.record({input}, result, [input](std::span<const double> grad_out) {
      auto g = input.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad_out[i];
    });
  }
  return result;
}

Tensor softmax(Tape& tape, const Tensor& logits) {
  const std::size_t classes = logits.shape().back();
  if (classes < 2) throw DimensionError("softmax: last extent must be at least 2, shape " + shape_string(logits.shape()));
  const std::size_t rows = logits.numel() / classes;
  Buffer out(logits.numel());
  const auto in = logits.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = in.data() + r * classes;
    double* y = out.data() + r * classes;
    const double peak = *std::max_element(x, x + classes);
    double total = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      y[j] = std::exp(x[j] - peak);
      total += y[j];
    }
    for (std::size_t j = 0; j < classes; ++j) y[j] /= total;
  }
  Tensor result(logits.shape(), std::move(out));
  if (tape.recording() && logits.requires_grad()) {
    tape.record({logits}, result, [logits, result, rows, classes](std::span<const double> grad_out) {
      const auto y = result.data();
      auto g = logits.mutable_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * classes;
        double dot = 0.0;
        for (std::size_t j = 0; j < classes; ++j) dot += grad_out[base + j] * y[base + j];
        for (std::size_t j = 0; j < classes; ++j) g[base + j] += y[base + j] * (grad_out[base + j] - dot);
      }
    });
  }
  return result;
}

}  // namespace mdmt::ops
