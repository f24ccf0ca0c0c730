#include "mdmt/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mdmt/errors.hpp"

namespace mdmt {

std::vector<Buffer> finite_diff_grad(const std::function<double()>& loss, std::span<Tensor> params, double eps) {
  if (!(eps > 0.0)) throw ContractError("finite_diff_grad: eps must be positive");
  std::vector<Buffer> grads;
  grads.reserve(params.size());
  for (Tensor& param : params) {
    Buffer grad(param.numel());
    auto values = param.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + eps;
      const double up = loss();
      values[i] = original - eps;
      const double down = loss();
      values[i] = original;
      grad[i] = (up - down) / (2.0 * eps);
    }
    grads.push_back(std::move(grad));
  }
  return grads;
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  if (a.size() != b.size()) throw DimensionError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace mdmt
