#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mdmt/tensor.hpp"

namespace mdmt {

/// Central-difference gradient estimate of `loss` with respect to every
/// element of every tensor in `params`. Each element is perturbed in place
/// and restored exactly before moving on.
std::vector<Buffer> finite_diff_grad(const std::function<double()>& loss, std::span<Tensor> params, double eps);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6);

}  // namespace mdmt
