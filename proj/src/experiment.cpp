#include "mdmt/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "mdmt/checkpoint.hpp"
#include "mdmt/manifest.hpp"

namespace mdmt {
namespace {

std::uint64_t kind_salt(ExperimentKind kind) { return 0x100 + static_cast<std::uint64_t>(kind); }

std::set<std::string> centers_of(const TaskDataset& d) {
  std::set<std::string> out;
  for (const auto& s : d.samples) out.insert(s.center_id);
  return out;
}

struct FoldData {
  TaskDataset train;
  TaskDataset validation;
  TaskDataset test;
};

FoldData fold_data(const TaskDataset& dataset, const Fold& fold) {
  return {dataset.subset(fold.train_ids), dataset.subset(fold.val_ids), dataset.subset(fold.test_ids)};
}

MultiTaskParams load_model(const std::filesystem::path& path) {
  return MultiTaskParams::unflatten(load_checkpoint(path));
}

ParamSet take_head(const MultiTaskParams& params, const TaskId& task, const std::filesystem::path& origin) {
  auto it = params.heads.find(task);
  if (it == params.heads.end()) {
    throw ValidationError("checkpoint " + origin.string() + " has no head for task " + task.name);
  }
  return it->second.clone();
}

FoldResult run_fold(const ExperimentSetup& setup, const TaskDataset& tau1, const TaskDataset& tau2,
                    const TaskSplits& splits, std::size_t f) {
  const ModelConfig config = model_config_for(setup, setup.kind, tau1.num_classes, tau2.num_classes);
  const FoldData d1 = fold_data(tau1, splits.tau1.folds.at(f));
  const FoldData d2 = fold_data(tau2, splits.tau2.folds.at(f));
  const std::uint64_t fold_seed = derive_seed(setup.seed ^ static_cast<std::uint64_t>(f), kind_salt(setup.kind));
  std::mt19937_64 init_rng(fold_seed);

  MultiTaskParams params;
  TrainRequest request;
  request.model = &config;
  request.schedule = setup.schedule;
  request.optimizer = setup.optimizer;
  request.loss = setup.loss;
  request.seed = fold_seed;

  switch (setup.kind) {
    case ExperimentKind::kStlTau1:
      params = init_params(config, init_rng);
      request.train = {&d1.train};
      request.validation = {&d1.validation};
      break;
    case ExperimentKind::kStlTau2:
      params = init_params(config, init_rng);
      request.train = {&d2.train};
      request.validation = {&d2.validation};
      break;
    case ExperimentKind::kFineTune: {
      const auto source = checkpoint_path(setup.checkpoint_dir, ExperimentKind::kStlTau2, setup.seed, f);
      const MultiTaskParams pretrained = load_model(source);
      params.backbone = pretrained.backbone.clone();
      params.heads.emplace(kTau2, take_head(pretrained, kTau2, source));
      params.heads.emplace(kTau1, init_head(config.head(kTau1), config.backbone.feature_dim(), init_rng));
      request.train = {&d1.train};
      request.validation = {&d1.validation};
      request.task_filter = kTau1;
      break;
    }
    case ExperimentKind::kMdmt: {
      const auto source1 = checkpoint_path(setup.checkpoint_dir, ExperimentKind::kStlTau1, setup.seed, f);
      const auto source2 = checkpoint_path(setup.checkpoint_dir, ExperimentKind::kStlTau2, setup.seed, f);
      const MultiTaskParams stl1 = load_model(source1);
      const MultiTaskParams stl2 = load_model(source2);
      params.backbone = average_weights(stl1.backbone, stl2.backbone);
      params.heads.emplace(kTau1, take_head(stl1, kTau1, source1));
      params.heads.emplace(kTau2, take_head(stl2, kTau2, source2));
      request.train = {&d1.train, &d2.train};
      request.validation = {&d1.validation, &d2.validation};
      break;
    }
  }
  check_params(config, params);

  const TrainHistory history = train_loop(params, request);
  save_checkpoint(checkpoint_path(setup.checkpoint_dir, setup.kind, setup.seed, f), params.flatten());

  FoldResult result;
  result.fold = static_cast<int>(f);
  result.epochs_run = history.epochs_run;
  result.best_epoch = history.best_epoch;
  auto score = [&](const TaskDataset& test) {
    std::vector<int> truth;
    truth.reserve(test.size());
    for (const auto& s : test.samples) truth.push_back(s.label);
    const auto predictions = predict(params, config, test, setup.schedule.eval_batch_size);
    result.metrics[test.task] = compute_metrics(predictions, truth, test.num_classes);
  };
  switch (setup.kind) {
    case ExperimentKind::kStlTau1:
    case ExperimentKind::kFineTune:
      score(d1.test);
      break;
    case ExperimentKind::kStlTau2:
      score(d2.test);
      break;
    case ExperimentKind::kMdmt:
      score(d1.test);
      score(d2.test);
      break;
  }
  return result;
}

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.10g", value);
  return buffer;
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kStlTau1:
      return "stl_tau1";
    case ExperimentKind::kStlTau2:
      return "stl_tau2";
    case ExperimentKind::kFineTune:
      return "ft";
    case ExperimentKind::kMdmt:
      return "mdmt";
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(const std::string& text) {
  for (auto kind : {ExperimentKind::kStlTau1, ExperimentKind::kStlTau2, ExperimentKind::kFineTune, ExperimentKind::kMdmt}) {
    if (text == to_string(kind)) return kind;
  }
  throw ValidationError("experiment must be one of stl_tau1, stl_tau2, ft, mdmt; got '" + text + "'");
}

TaskSplits make_task_splits(const TaskDataset& tau1, const TaskDataset& tau2, const SplitSpec& spec,
                            std::uint64_t seed) {
  TaskSplits splits;
  if (spec.kind == SplitPlan::Kind::kCrossValidation) {
    splits.tau1 = stratified_kfold(tau1, spec.k, seed);
    splits.tau2 = stratified_kfold(tau2, spec.k, derive_seed(seed, 2));
    return splits;
  }
  splits.tau1 = loco_split(tau1, seed);
  if (centers_of(tau1) == centers_of(tau2)) {
    splits.tau2 = loco_split(tau2, derive_seed(seed, 2));
  } else {
    splits.tau2 = stratified_kfold(tau2, splits.tau1.folds.size(), derive_seed(seed, 2));
  }
  return splits;
}

ModelConfig model_config_for(const ExperimentSetup& setup, ExperimentKind kind, int tau1_classes, int tau2_classes) {
  ModelConfig config;
  config.backbone = setup.backbone;
  const HeadConfig head1{kTau1, setup.head_hidden, tau1_classes};
  const HeadConfig head2{kTau2, setup.head_hidden, tau2_classes};
  switch (kind) {
    case ExperimentKind::kStlTau1:
      config.heads = {head1};
      break;
    case ExperimentKind::kStlTau2:
      config.heads = {head2};
      break;
    case ExperimentKind::kFineTune:
    case ExperimentKind::kMdmt:
      config.heads = {head1, head2};
      break;
  }
  return config;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, ExperimentKind kind, std::uint64_t seed,
                                      std::size_t fold) {
  return dir / (to_string(kind) + "_seed" + std::to_string(seed) + "_fold" + std::to_string(fold) + ".ckpt");
}

std::vector<std::filesystem::path> required_checkpoints(const ExperimentSetup& setup, std::size_t folds) {
  std::vector<ExperimentKind> needs;
  if (setup.kind == ExperimentKind::kFineTune) needs = {ExperimentKind::kStlTau2};
  if (setup.kind == ExperimentKind::kMdmt) needs = {ExperimentKind::kStlTau1, ExperimentKind::kStlTau2};
  std::vector<std::filesystem::path> paths;
  for (auto kind : needs) {
    for (std::size_t f = 0; f < folds; ++f) paths.push_back(checkpoint_path(setup.checkpoint_dir, kind, setup.seed, f));
  }
  return paths;
}

std::vector<FoldResult> run_experiment(const ExperimentSetup& setup, const TaskDataset& tau1, const TaskDataset& tau2,
                                       const TaskSplits& splits) {
  const std::size_t folds = splits.fold_count();
  if (folds == 0 || splits.tau2.folds.size() != folds) {
    throw ContractError("run_experiment: tau1 and tau2 split plans need the same non-zero fold count");
  }
  std::vector<std::string> missing;
  for (const auto& path : required_checkpoints(setup, folds)) {
    if (!std::filesystem::exists(path)) missing.push_back(path.string());
  }
  if (!missing.empty()) {
    std::string message = to_string(setup.kind) + " requires checkpoints from earlier runs (" +
                          (setup.kind == ExperimentKind::kMdmt ? "stl_tau1 and stl_tau2" : "stl_tau2") +
                          " with the same seed and split); missing:";
    for (const auto& m : missing) message += "\n  " + m;
    throw PrerequisiteError(message);
  }

  std::vector<FoldResult> results(folds);
  std::vector<std::exception_ptr> errors(folds);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t f = next++; f < folds; f = next++) {
      try {
        results[f] = run_fold(setup, tau1, tau2, splits, f);
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(setup.jobs, 1, folds);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& error : errors) {
    if (error) std::rethrow_exception(error);
  }
  return results;
}

std::vector<ResultRow> to_rows(ExperimentKind kind, const std::string& backbone, std::uint64_t seed,
                               const std::vector<FoldResult>& results) {
  std::vector<ResultRow> rows;
  for (const auto& r : results) {
    for (const auto& [task, m] : r.metrics) {
      rows.push_back(ResultRow{to_string(kind), backbone, r.fold, task.name, m.acc, m.f1, m.gm, r.epochs_run,
                               r.best_epoch, seed});
    }
  }
  return rows;
}

std::string format_results_csv(const ResultTable& table) {
  std::ostringstream out;
  out << "# schema_version=" << table.schema_version << " split=" << table.split << '\n';
  out << "experiment,backbone,fold,task,acc,f1,gm,epochs_run,best_epoch,seed\n";
  for (const auto& r : table.rows) {
    out << r.experiment << ',' << r.backbone << ',' << r.fold << ',' << r.task << ',' << format_double(r.acc) << ','
        << format_double(r.f1) << ',' << format_double(r.gm) << ',' << r.epochs_run << ',' << r.best_epoch << ','
        << r.seed << '\n';
  }
  return out.str();
}

ResultTable parse_results_csv(const std::string& text, const std::string& origin) {
  ResultTable table;
  table.schema_version = 0;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::istringstream meta(line.substr(1));
      std::string token;
      while (meta >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = token.substr(0, eq), value = token.substr(eq + 1);
        if (key == "schema_version") table.schema_version = std::stoi(value);
        if (key == "split") table.split = value;
      }
      continue;
    }
    const auto fields = split_csv_line(line);
    if (!header_seen) {
      if (fields != std::vector<std::string>{"experiment", "backbone", "fold", "task", "acc", "f1", "gm", "epochs_run",
                                             "best_epoch", "seed"}) {
        throw ValidationError(origin + ": unexpected result CSV header");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 10) throw ValidationError(origin + ": line " + std::to_string(line_number) + " needs 10 fields");
    try {
      ResultRow r;
      r.experiment = fields[0];
      r.backbone = fields[1];
      r.fold = std::stoi(fields[2]);
      r.task = fields[3];
      r.acc = std::stod(fields[4]);
      r.f1 = std::stod(fields[5]);
      r.gm = std::stod(fields[6]);
      r.epochs_run = std::stoi(fields[7]);
      r.best_epoch = std::stoi(fields[8]);
      r.seed = std::stoull(fields[9]);
      table.rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ValidationError(origin + ": line " + std::to_string(line_number) + " has a malformed number");
    }
  }
  if (table.schema_version == 0) throw ValidationError(origin + ": missing schema_version comment line");
  if (!header_seen) throw ValidationError(origin + ": missing header row");
  return table;
}

ResultTable read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open results file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_results_csv(buffer.str(), path.string());
}

}  // namespace mdmt
