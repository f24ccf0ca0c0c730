#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "mdmt/checkpoint.hpp"
#include "mdmt/errors.hpp"
#include "mdmt/experiment.hpp"
#include "mdmt/synth.hpp"
#include "mdmt/training.hpp"
#include "test_util.hpp"

using namespace mdmt;
namespace fs = std::filesystem;

namespace {

std::pair<TaskDataset, TaskDataset> small_synth(std::uint64_t seed) {
  SynthConfig config;
  config.n_tau1 = 60;
  config.n_tau2 = 90;
  config.image_size = 8;
  return synth_generate(config, seed);
}

TrainSchedule short_schedule() {
  TrainSchedule s;
  s.max_epochs = 6;
  s.warmup_epochs = 1;
  s.patience = 3;
  s.batch_size = 16;
  return s;
}

std::vector<double> all_values(const MultiTaskParams& params) {
  std::vector<double> out;
  for (const auto& [name, t] : params.flatten()) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

}  // namespace

TEST(Schedule, FullProtocolValues) {
  const auto full = TrainSchedule::full();
  EXPECT_EQ(full.warmup_epochs, 40);
  EXPECT_EQ(full.patience, 40);
  EXPECT_EQ(full.max_epochs, 300);
  EXPECT_EQ(full.batch_size, 128u);
  const OptimizerConfig adam;
  EXPECT_EQ(adam.learning_rate, 0.001);
  EXPECT_EQ(adam.beta1, 0.9);
  EXPECT_EQ(adam.weight_decay, 0.0001);
  EXPECT_NO_THROW(TrainSchedule::desk().validate());
}

TEST(Schedule, ValidationNamesTheField) {
  TrainSchedule s;
  s.warmup_epochs = s.max_epochs;
  try {
    s.validate();
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("train.warmup_epochs"), std::string::npos);
  }
}

TEST(Warmup, RampsLinearlyThenHolds) {
  EXPECT_DOUBLE_EQ(warmup_learning_rate(0.001, 1, 4), 0.00025);
  EXPECT_DOUBLE_EQ(warmup_learning_rate(0.001, 2, 4), 0.0005);
  EXPECT_DOUBLE_EQ(warmup_learning_rate(0.001, 4, 4), 0.001);
  EXPECT_DOUBLE_EQ(warmup_learning_rate(0.001, 50, 4), 0.001);
  EXPECT_DOUBLE_EQ(warmup_learning_rate(0.001, 1, 0), 0.001);
}

TEST(EarlyStopping, IgnoresWarmupThenCountsPatience) {
  EarlyStopping stop(2, 3);
  // Warm-up epochs never improve or stop, however good the loss.
  EXPECT_FALSE(stop.update(1, 0.1).improved);
  EXPECT_FALSE(stop.update(2, 0.1).stop);
  EXPECT_TRUE(stop.update(3, 5.0).improved);
  EXPECT_TRUE(stop.update(4, 4.0).improved);
  EXPECT_FALSE(stop.update(5, 4.0).stop);  // ties do not improve
  EXPECT_FALSE(stop.update(6, 4.5).stop);
  const auto last = stop.update(7, 4.2);
  EXPECT_TRUE(last.stop);
  EXPECT_FALSE(last.improved);
  EXPECT_EQ(stop.best_epoch(), 4);
  EXPECT_EQ(stop.best_loss(), 4.0);
}

TEST(EarlyStopping, ImprovementResetsTheCounter) {
  EarlyStopping stop(0, 2);
  stop.update(1, 3.0);
  EXPECT_FALSE(stop.update(2, 3.5).stop);
  EXPECT_TRUE(stop.update(3, 2.0).improved);
  EXPECT_FALSE(stop.update(4, 2.5).stop);
  EXPECT_TRUE(stop.update(5, 2.5).stop);
  EXPECT_EQ(stop.best_epoch(), 3);
}

TEST(TrainLoop, ReducesTrainingLossAndIsDeterministic) {
  const auto [tau1, tau2] = small_synth(1);
  const auto config = mdmt::testing::tiny_model(4, 8);
  TrainRequest request;
  request.model = &config;
  request.train = {&tau1, &tau2};
  request.schedule = short_schedule();
  request.schedule.patience = 10;
  request.optimizer.learning_rate = 0.01;
  request.seed = 3;

  std::mt19937_64 rng(2);
  const auto initial = init_params(config, rng);
  auto a = initial.clone(), b = initial.clone();
  const auto ha = train_loop(a, request);
  const auto hb = train_loop(b, request);
  ASSERT_EQ(ha.epochs_run, 6);
  EXPECT_LT(ha.epochs.back().train_loss, ha.epochs.front().train_loss);
  EXPECT_EQ(ha.epochs.front().learning_rate, 0.01);

  const auto va = all_values(a), vb = all_values(b);
  ASSERT_EQ(va.size(), vb.size());
  for (std::size_t i = 0; i < va.size(); ++i) EXPECT_EQ(std::bit_cast<std::uint64_t>(va[i]), std::bit_cast<std::uint64_t>(vb[i]));
  EXPECT_EQ(ha.best_epoch, hb.best_epoch);
}

TEST(TrainLoop, RestoresTheBestValidationSnapshot) {
  const auto [tau1, tau2] = small_synth(4);
  auto config = mdmt::testing::tiny_model(2, 4);
  config.heads = {HeadConfig{kTau1, {4}, 2}};
  TrainRequest request;
  request.model = &config;
  request.train = {&tau1};
  request.validation = {&tau1};
  request.schedule = short_schedule();
  request.seed = 5;
  std::mt19937_64 rng(6);
  auto params = init_params(config, rng);
  const auto history = train_loop(params, request);
  ASSERT_GE(history.best_epoch, 2);
  const double best = history.epochs[history.best_epoch - 1].validation_loss;
  const TaskDataset* sources[] = {&tau1};
  EXPECT_NEAR(evaluate_loss(params, config, sources, 256), best, 1e-9 * std::abs(best));
}

TEST(TrainLoop, TaskFilterKeepsOtherHeadsUntouched) {
  const auto [tau1, tau2] = small_synth(7);
  const auto config = mdmt::testing::tiny_model(2, 4);
  TrainRequest request;
  request.model = &config;
  request.train = {&tau1, &tau2};
  request.schedule = short_schedule();
  request.schedule.max_epochs = 2;
  request.task_filter = kTau1;
  std::mt19937_64 rng(8);
  auto params = init_params(config, rng);
  const auto before = params.heads.at(kTau2).clone();
  train_loop(params, request);
  const auto& after = params.heads.at(kTau2);
  for (const auto& [name, t] : before) {
    for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(t[i], after.at(name)[i]);
  }
}

TEST(TrainLoop, NonFiniteLossIsADivergence) {
  auto [tau1, tau2] = small_synth(9);
  tau1.samples[0].image.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  auto config = mdmt::testing::tiny_model(2, 4);
  config.heads = {HeadConfig{kTau1, {4}, 2}};
  TrainRequest request;
  request.model = &config;
  request.train = {&tau1};
  request.schedule = short_schedule();
  request.schedule.batch_size = tau1.size();
  std::mt19937_64 rng(10);
  auto params = init_params(config, rng);
  EXPECT_THROW(train_loop(params, request), DivergenceError);
}

TEST(Predict, ReturnsOneClassPerSample) {
  const auto [tau1, tau2] = small_synth(11);
  const auto config = mdmt::testing::tiny_model();
  std::mt19937_64 rng(12);
  const auto params = init_params(config, rng);
  const auto pred = predict(params, config, tau2, 7);
  ASSERT_EQ(pred.size(), tau2.size());
  for (int p : pred) {
    EXPECT_GE(p, 0);
    EXPECT_LT(p, 4);
  }
}

TEST(Experiment, FineTuneAndMdmtNeedStlCheckpoints) {
  const auto [tau1, tau2] = small_synth(13);
  const auto dir = fs::temp_directory_path() / "mdmt_training_experiment";
  fs::remove_all(dir);
  ExperimentSetup setup;
  setup.backbone.input_size = 8;
  setup.backbone.conv_blocks = {{2, 3}};
  setup.head_hidden = {4};
  setup.schedule = short_schedule();
  setup.schedule.max_epochs = 2;
  setup.seed = 4;
  setup.checkpoint_dir = dir;
  const auto splits = make_task_splits(tau1, tau2, SplitSpec::parse("cv:2"), 4);

  setup.kind = ExperimentKind::kMdmt;
  try {
    run_experiment(setup, tau1, tau2, splits);
    FAIL() << "expected PrerequisiteError";
  } catch (const PrerequisiteError& e) {
    EXPECT_NE(std::string(e.what()).find(checkpoint_path(dir, ExperimentKind::kStlTau1, 4, 0).string()),
              std::string::npos)
        << e.what();
  }

  for (auto kind : {ExperimentKind::kStlTau1, ExperimentKind::kStlTau2, ExperimentKind::kFineTune, ExperimentKind::kMdmt}) {
    setup.kind = kind;
    const auto results = run_experiment(setup, tau1, tau2, splits);
    ASSERT_EQ(results.size(), 2u);
    for (std::size_t f = 0; f < 2; ++f) {
      EXPECT_EQ(results[f].fold, static_cast<int>(f));
      EXPECT_TRUE(fs::exists(checkpoint_path(dir, kind, 4, f)));
    }
    const std::size_t tasks = kind == ExperimentKind::kMdmt ? 2u : 1u;
    EXPECT_EQ(results[0].metrics.size(), tasks);
  }
  fs::remove_all(dir);
}

TEST(Experiment, KindNamesRoundTrip) {
  for (auto kind : {ExperimentKind::kStlTau1, ExperimentKind::kStlTau2, ExperimentKind::kFineTune, ExperimentKind::kMdmt}) {
    EXPECT_EQ(parse_experiment_kind(to_string(kind)), kind);
  }
  EXPECT_THROW(parse_experiment_kind("nope"), ValidationError);
}

TEST(Results, CsvRoundTrips) {
  FoldResult f0{0, {{kTau1, Metrics{0.75, 0.7333333333333333, 0.7071067811865476}}}, 12, 9};
  FoldResult f1{1, {{kTau1, Metrics{1.0, 1.0, 1.0}}}, 8, 8};
  ResultTable table;
  table.split = "cv:5";
  table.rows = to_rows(ExperimentKind::kMdmt, "cnn-8x3", 7, {f0, f1});
  const std::string text = format_results_csv(table);
  const auto back = parse_results_csv(text);
  EXPECT_EQ(back.split, "cv:5");
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_NEAR(back.rows[0].f1, 0.7333333333333333, 1e-10);
  EXPECT_EQ(back.rows[1].seed, 7u);
  EXPECT_EQ(format_results_csv(back), text);
  EXPECT_THROW(parse_results_csv("# schema_version=1 split=cv:5\n"), ValidationError);
  EXPECT_THROW(parse_results_csv(text.substr(text.find('\n') + 1)), ValidationError);
}
