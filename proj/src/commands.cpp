#include "mdmt/commands.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mdmt/checkpoint.hpp"
#include "mdmt/errors.hpp"
#include "mdmt/manifest.hpp"
#include "mdmt/synth.hpp"

namespace mdmt {
namespace {

constexpr ExperimentKind kPipelineOrder[] = {ExperimentKind::kStlTau1, ExperimentKind::kStlTau2,
                                             ExperimentKind::kFineTune, ExperimentKind::kMdmt};

std::string display_name(const std::string& experiment) {
  if (experiment == "stl_tau1") return "STL_tau1";
  if (experiment == "stl_tau2") return "STL_tau2";
  if (experiment == "ft") return "FT";
  if (experiment == "mdmt") return "MDMT";
  return experiment;
}

std::string column_group(const std::string& split) { return split == "loco" ? "LOCO" : "CV"; }

std::string format_fixed(double value, int decimals) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.*f", decimals, value);
  return buffer;
}

void print_counts(const TaskDataset& dataset, std::ostream& out) {
  out << dataset.task.name << ": " << dataset.samples.size() << " samples, " << dataset.num_classes << " classes\n";
  const auto counts = dataset.class_counts();
  out << "  per class:";
  for (std::size_t c = 0; c < counts.size(); ++c) out << ' ' << c << '=' << counts[c];
  out << "\n  per center:";
  std::map<std::string, std::size_t> centers;
  for (const auto& s : dataset.samples) ++centers[s.center_id];
  for (const auto& [center, n] : centers) out << ' ' << center << '=' << n;
  out << '\n';
}

ManifestOptions manifest_options(const ExperimentConfig& config, const TaskId& task, int classes) {
  ManifestOptions options;
  options.task = task;
  options.num_classes = classes;
  options.image_size = config.backbone.input_size;
  options.normalize = config.normalize_images;
  return options;
}

ExperimentSetup make_setup(const ExperimentConfig& config, ExperimentKind kind, std::uint64_t seed,
                           const std::filesystem::path& checkpoint_dir) {
  ExperimentSetup setup;
  setup.kind = kind;
  setup.backbone = config.backbone;
  setup.head_hidden = config.head_hidden;
  setup.schedule = config.schedule;
  setup.optimizer = config.optimizer;
  setup.loss = config.loss;
  setup.seed = seed;
  setup.checkpoint_dir = checkpoint_dir;
  setup.jobs = config.jobs;
  return setup;
}

std::filesystem::path checkpoint_dir_for(const ExperimentConfig& config, const SplitSpec& split) {
  if (config.checkpoint_dir) return *config.checkpoint_dir;
  return config.out_dir / "checkpoints" / split_tag(split);
}

std::string describe_fold(const FoldResult& r) {
  std::ostringstream line;
  line << "fold " << r.fold << ": epochs_run=" << r.epochs_run << " best_epoch=" << r.best_epoch;
  for (const auto& [task, m] : r.metrics) {
    line << ' ' << task.name << "(acc=" << format_fixed(m.acc, 4) << " f1=" << format_fixed(m.f1, 4)
         << " gm=" << format_fixed(m.gm, 4) << ')';
  }
  return line.str();
}

std::string resolved_block(const ExperimentConfig& config) {
  std::string text;
  for (const auto& line : config.resolved) text += line + '\n';
  return text;
}

double sample_sd(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

void check_schema(const ResultTable& table, const std::filesystem::path& path) {
  if (table.schema_version != kResultSchemaVersion) {
    throw ValidationError(path.string() + ": schema_version " + std::to_string(table.schema_version) +
                          " is not supported (expected " + std::to_string(kResultSchemaVersion) + ")");
  }
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

int run_command(const std::function<int()>& command, std::ostream& err) {
  try {
    return command();
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
}

std::string split_tag(const SplitSpec& split) {
  return split.kind == SplitPlan::Kind::kLeaveOneCenterOut ? "loco" : "cv" + std::to_string(split.k);
}

std::pair<TaskDataset, TaskDataset> load_datasets(const ExperimentConfig& config, std::ostream& log) {
  std::filesystem::path tau1_path, tau2_path;
  if (config.uses_synthetic_data()) {
    const auto dir = config.out_dir / "data";
    tau1_path = dir / "tau1" / "manifest.csv";
    tau2_path = dir / "tau2" / "manifest.csv";
    if (!std::filesystem::exists(tau1_path) || !std::filesystem::exists(tau2_path)) {
      auto [tau1, tau2] = synth_generate(config.synth, config.synth_seed);
      write_manifest(dir / "tau1", tau1);
      write_manifest(dir / "tau2", tau2);
      log << "generated synthetic data in " << dir.string() << '\n';
    }
  } else {
    tau1_path = *config.tau1_manifest;
    tau2_path = *config.tau2_manifest;
  }
  auto tau1 = load_manifest(tau1_path, manifest_options(config, kTau1, 2));
  auto tau2 = load_manifest(tau2_path, manifest_options(config, kTau2, 4));
  return {std::move(tau1), std::move(tau2)};
}

int cmd_generate(const ExperimentConfig& config, std::ostream& out) {
  auto [tau1, tau2] = synth_generate(config.synth, config.synth_seed);
  const auto dir = config.out_dir / "data";
  write_manifest(dir / "tau1", tau1);
  write_manifest(dir / "tau2", tau2);
  out << "wrote " << (dir / "tau1" / "manifest.csv").string() << " and " << (dir / "tau2" / "manifest.csv").string()
      << '\n';
  print_counts(tau1, out);
  print_counts(tau2, out);
  return kExitOk;
}

int cmd_train(const ExperimentConfig& config, std::ostream& out) {
  if (!config.kind) throw ValidationError("experiment: required for train (stl_tau1, stl_tau2, ft or mdmt)");
  const ExperimentKind kind = *config.kind;
  const std::string tag = split_tag(config.split);
  const auto stem = to_string(kind) + "_" + tag + "_seed" + std::to_string(config.seed);

  std::ostringstream log;
  log << "# run " << stem << '\n' << resolved_block(config);
  const auto [tau1, tau2] = load_datasets(config, log);
  const auto splits = make_task_splits(tau1, tau2, config.split, config.seed);
  log << "split tau1=" << splits.tau1.describe() << " tau2=" << splits.tau2.describe() << " folds=" << splits.fold_count()
      << '\n';

  const auto setup = make_setup(config, kind, config.seed, checkpoint_dir_for(config, config.split));
  const auto start = Clock::now();
  const auto results = run_experiment(setup, tau1, tau2, splits);
  for (const auto& r : results) log << describe_fold(r) << '\n';

  ResultTable table;
  table.split = config.split.describe();
  table.rows = to_rows(kind, config.backbone.name, config.seed, results);
  const auto results_path = config.out_dir / "results" / (stem + ".csv");
  write_file_atomic(results_path, format_results_csv(table));
  write_file_atomic(config.out_dir / "logs" / (stem + ".log"), log.str());

  out << log.str() << "wrote " << results_path.string() << " (" << format_fixed(seconds_since(start), 1) << " s)\n";
  return kExitOk;
}

int cmd_compare(const CompareOptions& options, std::ostream& out) {
  for (const auto* p : {&options.a, &options.b}) {
    if (!std::filesystem::exists(*p)) throw ValidationError("results file " + p->string() + " does not exist");
  }
  const auto a = read_results_csv(options.a);
  const auto b = read_results_csv(options.b);
  check_schema(a, options.a);
  check_schema(b, options.b);
  if (a.split != b.split) {
    throw ValidationError("results use different splits: " + a.split + " vs " + b.split);
  }
  auto name_of = [](const ResultTable& t, const std::filesystem::path& p) {
    return t.rows.empty() ? p.stem().string() : display_name(t.rows.front().experiment);
  };
  ComparisonBlock block;
  block.test = name_of(a, options.a) + " vs " + name_of(b, options.b);
  block.column_group = column_group(a.split);
  block.pairing = resolve_pairing(a.rows, options.pairing, options.task);
  block.reports = compare_experiments(a.rows, b.rows, options.pairing, options.task);

  const std::vector<ComparisonBlock> blocks{block};
  const auto text = format_comparison_table(blocks);
  out << "pairing: " << to_string(block.pairing) << '\n' << text;
  if (options.out_dir) {
    write_file_atomic(*options.out_dir / "compare.txt", text);
    write_file_atomic(*options.out_dir / "compare.csv", format_comparison_csv(blocks));
  }
  return kExitOk;
}

std::string format_report(const std::vector<ResultTable>& tables, const std::string& task) {
  std::vector<std::string> experiments, groups;
  // (experiment, group) -> per-metric fold values
  std::map<std::pair<std::string, std::string>, std::array<std::vector<double>, 3>> values;
  for (const auto& table : tables) {
    const auto group = column_group(table.split);
    for (const auto& r : table.rows) {
      if (r.task != task) continue;
      if (std::find(experiments.begin(), experiments.end(), r.experiment) == experiments.end()) {
        experiments.push_back(r.experiment);
      }
      if (std::find(groups.begin(), groups.end(), group) == groups.end()) groups.push_back(group);
      auto& v = values[{r.experiment, group}];
      v[0].push_back(r.acc);
      v[1].push_back(r.f1);
      v[2].push_back(r.gm);
    }
  }
  if (experiments.empty()) throw ValidationError("no result rows for task " + task);
  std::stable_sort(groups.begin(), groups.end(), [](const std::string& x, const std::string& y) {
    return x == "CV" && y != "CV";
  });

  const char* metric_names[] = {"ACC", "F1", "GM"};
  std::ostringstream out;
  out << "| Experiment |";
  for (const auto& g : groups) {
    for (const char* m : metric_names) out << ' ' << g << ' ' << m << " |";
  }
  out << "\n|---|";
  for (std::size_t i = 0; i < groups.size() * 3; ++i) out << "---|";
  out << '\n';

  // Best mean per column, first listed experiment wins ties.
  std::map<std::pair<std::string, int>, std::string> best;
  for (const auto& g : groups) {
    for (int m = 0; m < 3; ++m) {
      double best_mean = -1.0;
      for (const auto& e : experiments) {
        auto it = values.find({e, g});
        if (it == values.end()) continue;
        const auto& v = it->second[m];
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        if (mean > best_mean) {
          best_mean = mean;
          best[{g, m}] = e;
        }
      }
    }
  }

  for (const auto& e : experiments) {
    out << "| " << display_name(e) << " |";
    for (const auto& g : groups) {
      auto it = values.find({e, g});
      for (int m = 0; m < 3; ++m) {
        if (it == values.end()) {
          out << " n/a |";
          continue;
        }
        const auto& v = it->second[m];
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        std::string cell = format_fixed(100.0 * mean, 1) + "(" + format_fixed(100.0 * sample_sd(v, mean), 1) + ")";
        if (best[{g, m}] == e) cell = "**" + cell + "**";
        out << ' ' << cell << " |";
      }
    }
    out << '\n';
  }
  out << "\nCells are mean(sd) over folds in percent for task " << task
      << "; the best mean per column is in bold (ties go to the first row).\n";
  return out.str();
}

int cmd_report(const ReportOptions& options, std::ostream& out) {
  if (options.inputs.empty()) throw ValidationError("report needs at least one result CSV");
  std::vector<ResultTable> tables;
  for (const auto& path : options.inputs) {
    if (!std::filesystem::exists(path)) throw ValidationError("results file " + path.string() + " does not exist");
    tables.push_back(read_results_csv(path));
  }
  for (std::size_t i = 0; i < tables.size(); ++i) {
    if (tables[i].schema_version != tables.front().schema_version) {
      throw ValidationError("conflicting schema versions: " + options.inputs.front().string() + " has " +
                            std::to_string(tables.front().schema_version) + ", " + options.inputs[i].string() +
                            " has " + std::to_string(tables[i].schema_version));
    }
    check_schema(tables[i], options.inputs[i]);
  }
  const auto text = format_report(tables, options.task);
  out << text;
  if (options.output) write_file_atomic(*options.output, text);
  return kExitOk;
}

int cmd_pipeline(const ExperimentConfig& config, std::ostream& out) {
  std::ostringstream log;
  log << "# pipeline\n" << resolved_block(config);
  const auto [tau1, tau2] = load_datasets(config, log);
  out << log.str();
  print_counts(tau1, out);
  print_counts(tau2, out);

  std::vector<ComparisonBlock> blocks;
  std::vector<ResultTable> report_tables;
  const auto pipeline_start = Clock::now();

  for (const auto& split : config.pipeline_splits) {
    const auto tag = split_tag(split);
    const bool loco = split.kind == SplitPlan::Kind::kLeaveOneCenterOut;
    const auto& seeds = loco ? config.loco_seeds : config.seeds;
    const auto checkpoint_dir = checkpoint_dir_for(config, split);
    std::map<ExperimentKind, ResultTable> tables;

    for (std::uint64_t seed : seeds) {
      const auto splits = make_task_splits(tau1, tau2, split, seed);
      for (ExperimentKind kind : kPipelineOrder) {
        const auto start = Clock::now();
        const auto setup = make_setup(config, kind, seed, checkpoint_dir);
        const auto results = run_experiment(setup, tau1, tau2, splits);
        auto& table = tables[kind];
        table.split = split.describe();
        const auto rows = to_rows(kind, config.backbone.name, seed, results);
        table.rows.insert(table.rows.end(), rows.begin(), rows.end());
        std::ostringstream line;
        line << tag << " seed " << seed << ' ' << to_string(kind) << ':';
        for (const auto& r : results) {
          for (const auto& [task, m] : r.metrics) {
            if (task == kTau1 || kind == ExperimentKind::kStlTau2) line << ' ' << format_fixed(m.acc, 3);
          }
        }
        log << line.str() << '\n';
        out << line.str() << " (" << format_fixed(seconds_since(start), 1) << " s)\n";
      }
    }

    for (ExperimentKind kind : kPipelineOrder) {
      write_file_atomic(config.out_dir / tag / ("results_" + to_string(kind) + ".csv"),
                        format_results_csv(tables[kind]));
      report_tables.push_back(tables[kind]);
    }
    const auto& mdmt = tables[ExperimentKind::kMdmt].rows;
    for (ExperimentKind baseline : {ExperimentKind::kStlTau1, ExperimentKind::kFineTune}) {
      ComparisonBlock block;
      block.test = "MDMT vs " + display_name(to_string(baseline));
      block.column_group = column_group(split.describe());
      block.pairing = resolve_pairing(mdmt, config.pairing, "tau1");
      block.reports = compare_experiments(mdmt, tables[baseline].rows, config.pairing, "tau1");
      blocks.push_back(block);
    }
    const std::vector<ComparisonBlock> split_blocks(blocks.end() - 2, blocks.end());
    write_file_atomic(config.out_dir / tag / "compare.txt", format_comparison_table(split_blocks));
    write_file_atomic(config.out_dir / tag / "compare.csv", format_comparison_csv(split_blocks));
    log << "pairing " << tag << ": "
        << to_string(resolve_pairing(mdmt, config.pairing, "tau1")) << '\n';
  }

  const auto table2 = format_comparison_table(blocks);
  const auto report = format_report(report_tables, "tau1");
  write_file_atomic(config.out_dir / "table2.txt", table2);
  write_file_atomic(config.out_dir / "table2.csv", format_comparison_csv(blocks));
  write_file_atomic(config.out_dir / "report.md", report);
  write_file_atomic(config.out_dir / "logs" / "pipeline.log", log.str());
  out << '\n' << report << '\n' << table2 << "pipeline finished in " << format_fixed(seconds_since(pipeline_start), 1)
      << " s\n";
  return kExitOk;
}

}  // namespace mdmt
