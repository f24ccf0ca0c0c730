#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "mdmt/errors.hpp"
#include "mdmt/experiment.hpp"
#include "mdmt/metrics.hpp"
#include "mdmt/splits.hpp"
#include "oracles.hpp"

using namespace mdmt;

namespace {

std::string joined(const std::vector<std::string>& problems) {
  std::string out;
  for (const auto& p : problems) out += p + "\n";
  return out;
}

}  // namespace

TEST(StratifiedKFold, InvariantsHoldOnRandomDatasets) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(50, 500)(rng);
    const int classes = seed % 2 ? 4 : 2;
    const std::size_t k = 2 + seed % 9;
    const auto d = oracle::random_split_dataset(rng, n, classes, 2 + seed % 5, k);
    const auto plan = stratified_kfold(d, k, seed);
    EXPECT_EQ(plan.describe(), "cv:" + std::to_string(k));
    const auto problems = oracle::stratified_violations(d, plan, k);
    EXPECT_TRUE(problems.empty()) << "seed " << seed << "\n" << joined(problems);
  }
}

TEST(StratifiedKFold, SameSeedSamePlan) {
  std::mt19937_64 rng(1);
  const auto d = oracle::random_split_dataset(rng, 120, 4, 3, 5);
  const auto a = stratified_kfold(d, 5, 9), b = stratified_kfold(d, 5, 9), c = stratified_kfold(d, 5, 10);
  bool differs = false;
  for (std::size_t f = 0; f < 5; ++f) {
    EXPECT_EQ(a.folds[f].test_ids, b.folds[f].test_ids);
    EXPECT_EQ(a.folds[f].val_ids, b.folds[f].val_ids);
    differs |= a.folds[f].test_ids != c.folds[f].test_ids;
  }
  EXPECT_TRUE(differs);
}

TEST(StratifiedKFold, RejectsTooFewSamplesPerClass) {
  std::mt19937_64 rng(2);
  auto d = oracle::random_split_dataset(rng, 20, 2, 2, 3);
  EXPECT_THROW(stratified_kfold(d, 1, 0), ValidationError);
  int ones = 0;
  for (auto& s : d.samples) {
    if (s.label == 1 && ++ones > 3) s.label = 0;
  }
  EXPECT_THROW(stratified_kfold(d, 5, 0), ValidationError);
}

TEST(Loco, InvariantsHoldOnRandomDatasets) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed + 1000);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(50, 500)(rng);
    const std::size_t centers = 2 + seed % 5;
    const auto d = oracle::random_split_dataset(rng, n, seed % 2 ? 4 : 2, centers, 1);
    const auto plan = loco_split(d, seed);
    EXPECT_EQ(plan.folds.size(), centers);
    const auto problems = oracle::loco_violations(d, plan);
    EXPECT_TRUE(problems.empty()) << "seed " << seed << "\n" << joined(problems);
  }
}

TEST(Loco, NeedsTwoCenters) {
  std::mt19937_64 rng(3);
  auto d = oracle::random_split_dataset(rng, 30, 2, 2, 2);
  for (auto& s : d.samples) s.center_id = "only";
  EXPECT_THROW(loco_split(d), ValidationError);
}

TEST(CarveValidation, TakesAStratifiedTenth) {
  std::mt19937_64 rng(4);
  const auto d = oracle::random_split_dataset(rng, 200, 2, 2, 40);
  std::vector<std::string> ids;
  for (const auto& s : d.samples) ids.push_back(s.sample_id);
  const auto [train, val] = carve_validation(d, ids, 5);
  EXPECT_EQ(train.size() + val.size(), 200u);
  EXPECT_NEAR(static_cast<double>(val.size()), 20.0, 1.0);
  std::set<std::string> overlap(train.begin(), train.end());
  for (const auto& id : val) EXPECT_FALSE(overlap.count(id));
}

TEST(SplitSpec, ParsesBothForms) {
  EXPECT_EQ(SplitSpec::parse("cv:5").k, 5u);
  EXPECT_EQ(SplitSpec::parse("loco").kind, SplitPlan::Kind::kLeaveOneCenterOut);
  EXPECT_EQ(SplitSpec::parse("cv:10").describe(), "cv:10");
  for (const char* bad : {"cv:1", "cv:", "cv:5x", "kfold", ""}) EXPECT_THROW(SplitSpec::parse(bad), ValidationError) << bad;
}

TEST(TaskSplits, LocoFallsBackToCvWhenCentersDiffer) {
  std::mt19937_64 rng(5);
  const auto tau1 = oracle::random_split_dataset(rng, 120, 2, 4, 10);
  auto tau2 = oracle::random_split_dataset(rng, 200, 4, 3, 10);
  const auto same = make_task_splits(tau1, tau1, SplitSpec::parse("loco"), 1);
  EXPECT_EQ(same.tau2.kind, SplitPlan::Kind::kLeaveOneCenterOut);
  const auto splits = make_task_splits(tau1, tau2, SplitSpec::parse("loco"), 1);
  EXPECT_EQ(splits.fold_count(), 4u);
  EXPECT_EQ(splits.tau2.kind, SplitPlan::Kind::kCrossValidation);
  EXPECT_EQ(splits.tau2.folds.size(), 4u);
  EXPECT_TRUE(oracle::loco_violations(tau1, splits.tau1).empty());
  EXPECT_TRUE(oracle::stratified_violations(tau2, splits.tau2, 4).empty());
}

TEST(Metrics, WorkedBinaryExample) {
  const std::vector<int> truth{0, 0, 1, 1}, pred{0, 1, 1, 1};
  const auto m = compute_metrics(pred, truth, 2);
  EXPECT_NEAR(m.acc, 0.75, 1e-12);
  EXPECT_NEAR(m.gm, 0.707107, 1e-6);
  EXPECT_NEAR(m.f1, 0.733333, 1e-6);
}

TEST(Metrics, PerfectAndRecallExamples) {
  const std::vector<int> truth{0, 1, 2, 3, 1}, same = truth;
  const auto perfect = compute_metrics(same, truth, 4);
  EXPECT_EQ(perfect.acc, 1.0);
  EXPECT_EQ(perfect.f1, 1.0);
  EXPECT_EQ(perfect.gm, 1.0);
  // Recalls 0.8 and 0.5.
  const std::vector<int> t{0, 0, 0, 0, 0, 1, 1}, p{0, 0, 0, 0, 1, 1, 0};
  EXPECT_NEAR(compute_metrics(p, t, 2).gm, std::sqrt(0.40), 1e-12);
}

TEST(Metrics, MissedClassZeroesGmAndAbsentClassIsSkipped) {
  const std::vector<int> t{0, 0, 1, 1}, p{0, 0, 0, 0};
  EXPECT_EQ(compute_metrics(p, t, 2).gm, 0.0);
  // Class 2 and 3 never occur in the truth.
  const std::vector<int> t3{0, 1, 0, 1}, p3{0, 1, 0, 1};
  const auto m = compute_metrics(p3, t3, 4);
  EXPECT_EQ(m.f1, 1.0);
  EXPECT_EQ(m.gm, 1.0);
}

TEST(Metrics, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    std::mt19937_64 rng(seed);
    const int classes = 2 + static_cast<int>(seed % 3);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 80)(rng);
    std::uniform_int_distribution<int> label(0, classes - 1);
    std::vector<int> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = label(rng);
      pred[i] = std::bernoulli_distribution(0.6)(rng) ? truth[i] : label(rng);
    }
    const auto got = compute_metrics(pred, truth, classes);
    const auto want = oracle::brute_force_metrics(pred, truth, classes);
    EXPECT_EQ(got.acc, want.acc) << seed;
    EXPECT_EQ(got.f1, want.f1) << seed;
    EXPECT_EQ(got.gm, want.gm) << seed;
  }
}

TEST(Metrics, RejectsBadInput) {
  const std::vector<int> a{0, 1}, b{0}, out{0, 2};
  EXPECT_THROW(compute_metrics(a, b, 2), ContractError);
  EXPECT_THROW(compute_metrics(out, a, 2), ContractError);
  EXPECT_THROW(compute_metrics(std::vector<int>{}, std::vector<int>{}, 2), ContractError);
}
