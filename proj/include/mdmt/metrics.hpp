#pragma once

#include <span>

namespace mdmt {

struct Metrics {
  double acc = 0.0;
  double f1 = 0.0;  // macro-averaged over classes present in the truth
  double gm = 0.0;  // geometric mean of per-class recalls, same class set
};

/// Classes absent from `truth` are left out of both macro averages.
Metrics compute_metrics(std::span<const int> predictions, std::span<const int> truth, int num_classes);

}  // namespace mdmt
