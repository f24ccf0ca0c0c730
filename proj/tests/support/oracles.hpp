#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mdmt/data.hpp"
#include "mdmt/metrics.hpp"
#include "mdmt/model.hpp"
#include "mdmt/splits.hpp"

namespace mdmt::oracle {

// Number of the thresholds {5, 9, 14} that the global score reaches.
inline int brixia_category(int global_score) {
  int category = 0;
  for (int threshold : {5, 9, 14}) category += global_score >= threshold ? 1 : 0;
  return category;
}

// Sum over tasks of the cross-entropy sum of that task's samples, each task
// run through the model on its own sub-batch.
inline double standalone_task_loss_sum(const MixedBatch& batch, const MultiTaskParams& params,
                                       const ModelConfig& config) {
  std::map<TaskId, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < batch.size(); ++i) members[batch.tasks[i]].push_back(i);
  const std::size_t per_image = batch.images.numel() / batch.size();
  double total = 0.0;
  for (const auto& [task, rows] : members) {
    Shape shape = batch.images.shape();
    shape[0] = rows.size();
    Buffer pixels;
    for (std::size_t i : rows) {
      const auto first = batch.images.data().begin() + static_cast<std::ptrdiff_t>(i * per_image);
      pixels.insert(pixels.end(), first, first + static_cast<std::ptrdiff_t>(per_image));
    }
    Tape tape(false);
    const auto outputs = model_forward(tape, Tensor(shape, std::move(pixels)), params, config);
    const Tensor& out = outputs.at(task);
    const std::size_t classes = out.dim(1);
    double task_sum = 0.0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const double p = out[r * classes + static_cast<std::size_t>(batch.labels[rows[r]])];
      task_sum -= std::log(std::max(p, kProbabilityFloor));
    }
    total += task_sum;
  }
  return total;
}

// Metrics by direct counting over the samples for each class.
inline Metrics brute_force_metrics(const std::vector<int>& predictions, const std::vector<int>& truth,
                                   int num_classes) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predictions[i] == truth[i] ? 1 : 0;
  double f1_sum = 0.0, recall_product = 1.0;
  std::size_t present = 0;
  for (int k = 0; k < num_classes; ++k) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == k && predictions[i] == k) ++tp;
      if (truth[i] != k && predictions[i] == k) ++fp;
      if (truth[i] == k && predictions[i] != k) ++fn;
    }
    if (tp + fn == 0) continue;
    ++present;
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    f1_sum += precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    recall_product *= recall;
  }
  Metrics m;
  m.acc = static_cast<double>(correct) / static_cast<double>(truth.size());
  m.f1 = f1_sum / static_cast<double>(present);
  m.gm = std::pow(recall_product, 1.0 / static_cast<double>(present));
  return m;
}

// Dataset with n samples, the given number of classes (each with at least
// min_per_class members) and centers C1..Cm.
inline TaskDataset random_split_dataset(std::mt19937_64& rng, std::size_t n, int classes, std::size_t centers,
                                        std::size_t min_per_class) {
  TaskDataset d;
  d.task = classes == 2 ? kTau1 : kTau2;
  d.num_classes = classes;
  std::uniform_int_distribution<int> label(0, classes - 1);
  std::uniform_int_distribution<std::size_t> center(1, centers);
  for (std::size_t i = 0; i < n; ++i) {
    TaskSample s;
    s.image = Tensor::zeros({1, 1, 1});
    s.task = d.task;
    s.label = i < min_per_class * static_cast<std::size_t>(classes) ? static_cast<int>(i % classes) : label(rng);
    s.center_id = "C" + std::to_string(i < centers ? i + 1 : center(rng));
    s.sample_id = "s" + std::to_string(i);
    d.samples.push_back(std::move(s));
  }
  std::shuffle(d.samples.begin(), d.samples.end(), rng);
  return d;
}

// Fold-level invariants shared by both split kinds: train, val and test are
// disjoint and together cover the dataset.
inline void check_fold_cover(const TaskDataset& dataset, const Fold& fold, std::size_t f,
                             std::vector<std::string>& problems) {
  std::multiset<std::string> all;
  all.insert(fold.train_ids.begin(), fold.train_ids.end());
  all.insert(fold.val_ids.begin(), fold.val_ids.end());
  all.insert(fold.test_ids.begin(), fold.test_ids.end());
  std::multiset<std::string> expected;
  for (const auto& s : dataset.samples) expected.insert(s.sample_id);
  if (all != expected) problems.push_back("fold " + std::to_string(f) + ": train/val/test do not partition the dataset");
  if (fold.train_ids.empty() || fold.test_ids.empty()) problems.push_back("fold " + std::to_string(f) + ": empty split");
}

// Violations of the stratified k-fold invariants; empty when all hold.
inline std::vector<std::string> stratified_violations(const TaskDataset& dataset, const SplitPlan& plan,
                                                      std::size_t k) {
  std::vector<std::string> problems;
  if (plan.folds.size() != k) return {"expected " + std::to_string(k) + " folds"};
  std::map<std::string, int> label;
  std::map<int, double> class_total;
  for (const auto& s : dataset.samples) {
    label[s.sample_id] = s.label;
    class_total[s.label] += 1.0;
  }
  const double n = static_cast<double>(dataset.size());
  std::multiset<std::string> tests;
  for (std::size_t f = 0; f < k; ++f) {
    const auto& fold = plan.folds[f];
    check_fold_cover(dataset, fold, f, problems);
    tests.insert(fold.test_ids.begin(), fold.test_ids.end());
    if (std::abs(static_cast<double>(fold.test_ids.size()) - n / static_cast<double>(k)) >= 1.0) {
      problems.push_back("fold " + std::to_string(f) + ": size " + std::to_string(fold.test_ids.size()));
    }
    std::map<int, double> count;
    for (const auto& id : fold.test_ids) count[label.at(id)] += 1.0;
    for (const auto& [c, total] : class_total) {
      if (std::abs(count[c] - total / static_cast<double>(k)) >= 1.0) {
        problems.push_back("fold " + std::to_string(f) + ": class " + std::to_string(c) + " count off");
      }
    }
  }
  std::multiset<std::string> expected;
  for (const auto& s : dataset.samples) expected.insert(s.sample_id);
  if (tests != expected) problems.push_back("test sets do not cover every sample exactly once");
  return problems;
}

// Violations of the leave-one-center-out invariants; empty when all hold.
inline std::vector<std::string> loco_violations(const TaskDataset& dataset, const SplitPlan& plan) {
  std::vector<std::string> problems;
  std::map<std::string, std::string> center;
  std::set<std::string> centers;
  for (const auto& s : dataset.samples) {
    center[s.sample_id] = s.center_id;
    centers.insert(s.center_id);
  }
  if (plan.folds.size() != centers.size()) return {"expected one fold per center"};
  std::set<std::string> held_out;
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    const auto& fold = plan.folds[f];
    check_fold_cover(dataset, fold, f, problems);
    held_out.insert(fold.center);
    std::size_t center_size = 0;
    for (const auto& s : dataset.samples) center_size += s.center_id == fold.center ? 1 : 0;
    if (fold.test_ids.size() != center_size) problems.push_back("fold " + std::to_string(f) + ": test is not the whole center");
    for (const auto& id : fold.test_ids) {
      if (center.at(id) != fold.center) problems.push_back("fold " + std::to_string(f) + ": foreign test sample " + id);
    }
    for (const auto* ids : {&fold.train_ids, &fold.val_ids}) {
      for (const auto& id : *ids) {
        if (center.at(id) == fold.center) problems.push_back("fold " + std::to_string(f) + ": held-out center leaks " + id);
      }
    }
  }
  if (held_out != centers) problems.push_back("not every center is held out once");
  return problems;
}

}  // namespace mdmt::oracle
