// mdmt: generate synthetic data, train experiments, compare and report results.
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mdmt/commands.hpp"
#include "mdmt/config.hpp"

namespace {

struct GlobalFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::string> out;
};

mdmt::ExperimentConfig load_config(const GlobalFlags& flags) {
  mdmt::KeyValueConfig raw;
  if (!flags.config_path.empty()) raw = mdmt::KeyValueConfig::load(flags.config_path);
  mdmt::CliOverrides overrides;
  overrides.seed = flags.seed;
  overrides.jobs = flags.jobs;
  if (flags.out) overrides.out = *flags.out;
  return mdmt::resolve_config(raw, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-dataset multi-task training on chest X-ray style data"};
  app.require_subcommand(1);
  GlobalFlags flags;
  app.add_option("--config", flags.config_path, "Experiment config file (key = value)");
  app.add_option("--seed", flags.seed, "Seed; overrides seed/seeds in the config");
  app.add_option("--jobs", flags.jobs, "Folds trained in parallel")->check(CLI::PositiveNumber);
  app.add_option("--out", flags.out, "Output directory");

  auto* generate = app.add_subcommand("generate", "Write the synthetic tau1/tau2 datasets");
  auto* train = app.add_subcommand("train", "Run one experiment kind over the configured split");
  auto* pipeline = app.add_subcommand("pipeline", "STL_tau1, STL_tau2, FT, MDMT, comparisons and report");

  auto* compare = app.add_subcommand("compare", "Paired one-tailed t-tests between two result CSVs");
  mdmt::CompareOptions compare_options;
  std::string pairing = "auto";
  compare->add_option("a", compare_options.a, "Results of A (e.g. MDMT)")->required();
  compare->add_option("b", compare_options.b, "Results of B (e.g. STL_tau1)")->required();
  compare->add_option("--pairing", pairing, "auto, group or fold")->check(CLI::IsMember({"auto", "group", "backbone", "fold"}));
  compare->add_option("--task", compare_options.task, "Task whose metrics are compared");

  auto* report = app.add_subcommand("report", "mean(sd) summary table of result CSVs");
  mdmt::ReportOptions report_options;
  std::optional<std::string> report_output;
  report->add_option("results", report_options.inputs, "Result CSVs")->required();
  report->add_option("--task", report_options.task, "Task to summarize");
  report->add_option("--output", report_output, "Also write the table to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mdmt::kExitValidation;
  }

  return mdmt::run_command(
      [&]() -> int {
        if (*generate) return mdmt::cmd_generate(load_config(flags), std::cout);
        if (*train) return mdmt::cmd_train(load_config(flags), std::cout);
        if (*pipeline) return mdmt::cmd_pipeline(load_config(flags), std::cout);
        if (*compare) {
          compare_options.pairing = mdmt::parse_pairing(pairing);
          if (flags.out) compare_options.out_dir = *flags.out;
          return mdmt::cmd_compare(compare_options, std::cout);
        }
        if (report_output) report_options.output = *report_output;
        return mdmt::cmd_report(report_options, std::cout);
      },
      std::cerr);
}
