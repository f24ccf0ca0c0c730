#include "mdmt/splits.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <tuple>
#include <unordered_map>

#include "mdmt/errors.hpp"
#include "mdmt/nn.hpp"

namespace mdmt {
namespace {

// Dataset order of a set of ids.
std::vector<std::string> in_dataset_order(const TaskDataset& dataset, const std::set<std::string>& ids) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (const auto& s : dataset.samples) {
    if (ids.count(s.sample_id)) out.push_back(s.sample_id);
  }
  return out;
}

}  // namespace

std::string SplitPlan::describe() const {
  return kind == Kind::kLeaveOneCenterOut ? "loco" : "cv:" + std::to_string(k);
}

std::pair<std::vector<std::string>, std::vector<std::string>> carve_validation(const TaskDataset& dataset,
                                                                              const std::vector<std::string>& ids,
                                                                              std::uint64_t seed) {
  std::unordered_map<std::string, int> label_of;
  for (const auto& s : dataset.samples) label_of.emplace(s.sample_id, s.label);
  std::map<int, std::vector<std::string>> by_class;
  for (const auto& id : ids) by_class[label_of.at(id)].push_back(id);

  std::mt19937_64 rng(seed);
  std::set<std::string> val;
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto take = static_cast<std::size_t>(std::llround(kValidationFraction * static_cast<double>(members.size())));
    val.insert(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(std::min(take, members.size())));
  }
  if (val.empty() && ids.size() >= 2) {
    // Too small for a 10% share; hold out one sample of the largest class.
    auto largest = std::max_element(by_class.begin(), by_class.end(),
                                    [](const auto& a, const auto& b) { return a.second.size() < b.second.size(); });
    val.insert(largest->second.front());
  }
  std::set<std::string> train(ids.begin(), ids.end());
  for (const auto& id : val) train.erase(id);
  return {in_dataset_order(dataset, train), in_dataset_order(dataset, val)};
}

SplitPlan stratified_kfold(const TaskDataset& dataset, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("stratified_kfold: k must be at least 2");
  const auto counts = dataset.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] < k) {
      throw ValidationError("stratified_kfold: class " + std::to_string(c) + " of " + dataset.task.name + " has " +
                            std::to_string(counts[c]) + " samples, fewer than k = " + std::to_string(k));
    }
  }

  std::mt19937_64 rng(derive_seed(seed, 0xcf01d));
  std::vector<std::vector<std::string>> by_class(counts.size());
  for (const auto& s : dataset.samples) by_class[static_cast<std::size_t>(s.label)].push_back(s.sample_id);

  std::vector<std::set<std::string>> test(k);
  std::size_t cursor = 0;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (const auto& id : members) test[cursor++ % k].insert(id);
  }

  SplitPlan plan;
  plan.kind = SplitPlan::Kind::kCrossValidation;
  plan.k = k;
  for (std::size_t f = 0; f < k; ++f) {
    Fold fold;
    fold.test_ids = in_dataset_order(dataset, test[f]);
    std::vector<std::string> pool;
    for (const auto& s : dataset.samples) {
      if (!test[f].count(s.sample_id)) pool.push_back(s.sample_id);
    }
    std::tie(fold.train_ids, fold.val_ids) = carve_validation(dataset, pool, derive_seed(seed, 0x7a1 + f));
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

SplitPlan loco_split(const TaskDataset& dataset, std::uint64_t seed) {
  std::set<std::string> centers;
  for (const auto& s : dataset.samples) centers.insert(s.center_id);
  if (centers.size() < 2) {
    throw ValidationError("loco_split: " + dataset.task.name + " needs at least 2 centers, found " +
                          std::to_string(centers.size()));
  }
  SplitPlan plan;
  plan.kind = SplitPlan::Kind::kLeaveOneCenterOut;
  plan.k = centers.size();
  std::size_t f = 0;
  for (const auto& center : centers) {
    Fold fold;
    fold.center = center;
    std::vector<std::string> pool;
    for (const auto& s : dataset.samples) {
      (s.center_id == center ? fold.test_ids : pool).push_back(s.sample_id);
    }
    std::tie(fold.train_ids, fold.val_ids) = carve_validation(dataset, pool, derive_seed(seed, 0x10c0 + f));
    plan.folds.push_back(std::move(fold));
    ++f;
  }
  return plan;
}

SplitSpec SplitSpec::parse(const std::string& text) {
  if (text == "loco") return SplitSpec{SplitPlan::Kind::kLeaveOneCenterOut, 0};
  if (text.rfind("cv:", 0) == 0) {
    try {
      std::size_t used = 0;
      const long k = std::stol(text.substr(3), &used);
      if (used == text.size() - 3 && k >= 2) return SplitSpec{SplitPlan::Kind::kCrossValidation, static_cast<std::size_t>(k)};
    } catch (const std::exception&) {
    }
  }
  throw ValidationError("split must be 'cv:<k>' with k >= 2 or 'loco', got '" + text + "'");
}

std::string SplitSpec::describe() const {
  return kind == SplitPlan::Kind::kLeaveOneCenterOut ? "loco" : "cv:" + std::to_string(k);
}

}  // namespace mdmt
