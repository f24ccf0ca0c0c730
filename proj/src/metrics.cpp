#include "mdmt/metrics.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "mdmt/errors.hpp"

namespace mdmt {

Metrics compute_metrics(std::span<const int> predictions, std::span<const int> truth, int num_classes) {
  if (predictions.empty() || truth.empty()) throw ContractError("compute_metrics: empty input");
  if (predictions.size() != truth.size()) throw ContractError("compute_metrics: length mismatch");
  if (num_classes < 2) throw ContractError("compute_metrics: need at least 2 classes");
  const auto c = static_cast<std::size_t>(num_classes);

  // confusion[t][p]
  std::vector<std::vector<std::size_t>> confusion(c, std::vector<std::size_t>(c, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || predictions[i] < 0 || predictions[i] >= num_classes) {
      throw ContractError("compute_metrics: class index out of range at position " + std::to_string(i));
    }
    ++confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predictions[i])];
  }

  std::size_t correct = 0;
  for (std::size_t k = 0; k < c; ++k) correct += confusion[k][k];

  double f1_sum = 0.0;
  double recall_product = 1.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < c; ++k) {
    std::size_t support = 0, predicted = 0;
    for (std::size_t j = 0; j < c; ++j) {
      support += confusion[k][j];
      predicted += confusion[j][k];
    }
    if (support == 0) continue;
    ++present;
    const double tp = static_cast<double>(confusion[k][k]);
    const double recall = tp / static_cast<double>(support);
    const double precision = predicted > 0 ? tp / static_cast<double>(predicted) : 0.0;
    const double f1 = (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    f1_sum += f1;
    recall_product *= recall;
  }

  Metrics m;
  m.acc = static_cast<double>(correct) / static_cast<double>(truth.size());
  m.f1 = f1_sum / static_cast<double>(present);
  m.gm = std::pow(recall_product, 1.0 / static_cast<double>(present));
  return m;
}

}  // namespace mdmt
