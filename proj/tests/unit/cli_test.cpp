#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mdmt/commands.hpp"
#include "mdmt/config.hpp"
#include "mdmt/experiment.hpp"

using namespace mdmt;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run run_cli(const std::string& args) {
  const std::string command = std::string(MDMT_CLI_PATH) + " " + args + " 2>&1";
  Run run;
  FILE* pipe = popen(command.c_str(), "r");
  if (!pipe) return run;
  std::array<char, 4096> buffer{};
  std::size_t n = 0;
  while ((n = std::fread(buffer.data(), 1, buffer.size(), pipe)) > 0) run.output.append(buffer.data(), n);
  const int status = pclose(pipe);
  run.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return run;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("mdmt_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Small, fast configuration; `extra` lines are appended.
  fs::path small_config(const std::string& extra = "") {
    const auto path = dir_ / "small.cfg";
    write_file(path,
               "# tiny run\n"
               "seed = 3\n"
               "split = cv:2\n"
               "synth.n_tau1 = 40\n"
               "synth.n_tau2 = 60\n"
               "model.input_size = 8\n"
               "model.conv_blocks = 2x3\n"
               "model.head_hidden = 4\n"
               "train.max_epochs = 2\n"
               "train.warmup_epochs = 1\n"
               "train.patience = 1\n"
               "train.batch_size = 16\n" +
                   extra);
    return path;
  }

  std::string results_csv(const std::string& experiment, const std::vector<double>& accs, const std::string& split = "cv:2",
                          int schema = 1) {
    std::ostringstream out;
    out << "# schema_version=" << schema << " split=" << split << "\n"
        << "experiment,backbone,fold,task,acc,f1,gm,epochs_run,best_epoch,seed\n";
    for (std::size_t f = 0; f < accs.size(); ++f) {
      out << experiment << ",cnn," << f << ",tau1," << accs[f] << ',' << accs[f] << ',' << accs[f] << ",5,3,1\n";
    }
    return out.str();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, HelpExitsZero) {
  const auto run = run_cli("--help");
  EXPECT_EQ(run.code, 0);
  EXPECT_NE(run.output.find("pipeline"), std::string::npos);
}

TEST_F(CliTest, UnknownOptionExitsTwo) { EXPECT_EQ(run_cli("train --bogus").code, kExitValidation); }

TEST_F(CliTest, ConfigErrorsAreFieldLevel) {
  const auto path = dir_ / "bad.cfg";
  write_file(path, "seed = 1\nexperiment = stl_tau1\ntrain.max_epochs = -3\noptimizer.beta1 = 1.5\nmodel.widht = 3\n");
  const auto run = run_cli("--config " + path.string() + " train");
  EXPECT_EQ(run.code, kExitValidation);
  EXPECT_NE(run.output.find("invalid configuration"), std::string::npos) << run.output;
  EXPECT_NE(run.output.find("train.max_epochs"), std::string::npos) << run.output;
  EXPECT_NE(run.output.find("optimizer.beta1"), std::string::npos) << run.output;
  EXPECT_NE(run.output.find("model.widht"), std::string::npos) << run.output;
}

TEST_F(CliTest, MissingSeedIsReported) {
  const auto path = dir_ / "noseed.cfg";
  write_file(path, "experiment = stl_tau1\n");
  const auto run = run_cli("--config " + path.string() + " train");
  EXPECT_EQ(run.code, kExitValidation);
  EXPECT_NE(run.output.find("seed: required"), std::string::npos) << run.output;
}

TEST(Config, ResolvesDefaultsAndOverrides) {
  KeyValueConfig raw = KeyValueConfig::parse("seeds = 4, 5\nsplit = loco\n");
  CliOverrides overrides;
  const auto config = resolve_config(raw, overrides);
  EXPECT_EQ(config.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(config.seed, 4u);
  EXPECT_EQ(config.synth_seed, 4u);
  EXPECT_EQ(config.split.kind, SplitPlan::Kind::kLeaveOneCenterOut);
  overrides.seed = 9;
  const auto forced = resolve_config(raw, overrides);
  EXPECT_EQ(forced.seeds, (std::vector<std::uint64_t>{9}));
  EXPECT_THROW(KeyValueConfig::parse("seed = 1\nseed = 2\n"), ValidationError);
  EXPECT_THROW(KeyValueConfig::parse("no equals sign\n"), ValidationError);
}

TEST_F(CliTest, GenerateIsDeterministicWithSixCenters) {
  const auto config = small_config();
  const auto a = run_cli("--config " + config.string() + " --out " + (dir_ / "a").string() + " generate");
  const auto b = run_cli("--config " + config.string() + " --out " + (dir_ / "b").string() + " generate");
  ASSERT_EQ(a.code, 0) << a.output;
  ASSERT_EQ(b.code, 0) << b.output;
  for (const char* task : {"tau1", "tau2"}) {
    const auto ma = read_file(dir_ / "a" / "data" / task / "manifest.csv");
    EXPECT_FALSE(ma.empty());
    EXPECT_EQ(ma, read_file(dir_ / "b" / "data" / task / "manifest.csv"));
    std::set<std::string> centers;
    std::istringstream lines(ma);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("sample_id", 0) == 0) continue;
      const auto first = line.find(',');
      const auto second = line.find(',', first + 1);
      const auto third = line.find(',', second + 1);
      centers.insert(line.substr(second + 1, third - second - 1));
    }
    EXPECT_EQ(centers.size(), 6u) << task;
  }
  EXPECT_NE(a.output.find("classes"), std::string::npos) << a.output;
}

TEST_F(CliTest, MdmtWithoutCheckpointsNamesTheArtifacts) {
  const auto config = small_config("experiment = mdmt\n");
  const auto run = run_cli("--config " + config.string() + " --out " + (dir_ / "out").string() + " train");
  EXPECT_EQ(run.code, kExitValidation) << run.output;
  EXPECT_NE(run.output.find("stl_tau1"), std::string::npos) << run.output;
  EXPECT_NE(run.output.find("stl_tau2"), std::string::npos) << run.output;
}

TEST_F(CliTest, TrainWritesResultsAndRerunsIdentically) {
  const auto config = small_config("experiment = stl_tau1\n");
  const auto out = dir_ / "out";
  const auto first = run_cli("--config " + config.string() + " --out " + out.string() + " train");
  ASSERT_EQ(first.code, 0) << first.output;
  const auto csv = out / "results" / "stl_tau1_cv2_seed3.csv";
  const auto bytes = read_file(csv);
  const auto table = parse_results_csv(bytes);
  EXPECT_EQ(table.rows.size(), 2u);
  for (const auto& r : table.rows) EXPECT_EQ(r.task, "tau1");
  const auto log = read_file(out / "logs" / "stl_tau1_cv2_seed3.log");
  EXPECT_NE(log.find("optimizer.learning_rate = 0.001"), std::string::npos) << log;
  EXPECT_NE(log.find("train.max_epochs = 2"), std::string::npos) << log;
  const auto second = run_cli("--config " + config.string() + " --out " + out.string() + " train");
  ASSERT_EQ(second.code, 0) << second.output;
  EXPECT_EQ(read_file(csv), bytes);
}

TEST_F(CliTest, ReportFormatsMeanAndSampleSd) {
  write_file(dir_ / "a.csv", results_csv("stl_tau1", {0.60, 0.70}));
  write_file(dir_ / "b.csv", results_csv("mdmt", {0.70, 0.80}));
  const auto run = run_cli("report " + (dir_ / "a.csv").string() + " " + (dir_ / "b.csv").string());
  ASSERT_EQ(run.code, 0) << run.output;
  EXPECT_NE(run.output.find("| STL_tau1 | 65.0(7.1)"), std::string::npos) << run.output;
  EXPECT_NE(run.output.find("**75.0(7.1)**"), std::string::npos) << run.output;
  EXPECT_EQ(run.output.find("**65.0"), std::string::npos) << run.output;
}

TEST_F(CliTest, ReportMarksExactlyOneBestPerColumn) {
  write_file(dir_ / "a.csv", results_csv("stl_tau1", {0.60, 0.70}));
  write_file(dir_ / "b.csv", results_csv("ft", {0.70, 0.60}));
  write_file(dir_ / "c.csv", results_csv("mdmt", {0.50, 0.70}));
  const auto run = run_cli("report " + (dir_ / "a.csv").string() + " " + (dir_ / "b.csv").string() + " " +
                           (dir_ / "c.csv").string());
  ASSERT_EQ(run.code, 0) << run.output;
  std::size_t marks = 0;
  for (std::size_t pos = run.output.find("**"); pos != std::string::npos; pos = run.output.find("**", pos + 2)) ++marks;
  EXPECT_EQ(marks, 3u * 2u) << run.output;  // ACC, F1, GM; tie goes to the first row
  EXPECT_NE(run.output.find("| STL_tau1 | **65.0(7.1)**"), std::string::npos) << run.output;
}

TEST_F(CliTest, ReportRejectsConflictingSchemas) {
  write_file(dir_ / "a.csv", results_csv("stl_tau1", {0.60, 0.70}));
  write_file(dir_ / "b.csv", results_csv("mdmt", {0.70, 0.80}, "cv:2", 2));
  const auto run = run_cli("report " + (dir_ / "a.csv").string() + " " + (dir_ / "b.csv").string());
  EXPECT_EQ(run.code, kExitValidation) << run.output;
  EXPECT_NE(run.output.find("schema"), std::string::npos) << run.output;
}

TEST_F(CliTest, CompareIdenticalFilesHasBlankStars) {
  std::string rows = results_csv("mdmt", {0.8, 0.7, 0.9});
  write_file(dir_ / "a.csv", rows);
  write_file(dir_ / "b.csv", rows);
  const auto run = run_cli("--out " + (dir_ / "cmp").string() + " compare " + (dir_ / "a.csv").string() + " " +
                           (dir_ / "b.csv").string());
  ASSERT_EQ(run.code, 0) << run.output;
  const auto table = run.output.substr(0, run.output.find("Significance"));
  EXPECT_EQ(table.find('*'), std::string::npos) << run.output;
  const auto csv = read_file(dir_ / "cmp" / "compare.csv");
  EXPECT_NE(csv.find(",0.5,,1\n"), std::string::npos) << csv;
  EXPECT_EQ(csv.find("*"), std::string::npos) << csv;
}

TEST_F(CliTest, CompareKnownDifferenceMatchesStars) {
  write_file(dir_ / "a.csv", results_csv("mdmt", {0.81, 0.72, 0.93, 0.84, 0.95}));
  write_file(dir_ / "b.csv", results_csv("stl_tau1", {0.80, 0.70, 0.90, 0.80, 0.90}));
  const auto run = run_cli("--out " + (dir_ / "cmp").string() + " compare --pairing fold " +
                           (dir_ / "a.csv").string() + " " + (dir_ / "b.csv").string());
  ASSERT_EQ(run.code, 0) << run.output;
  EXPECT_NE(run.output.find("pairing: fold"), std::string::npos);
  // d = 0.01..0.05 is the d = [1..5] example scaled; p is scale-free.
  EXPECT_NE(run.output.find("p=0.0066"), std::string::npos) << run.output;
  EXPECT_NE(read_file(dir_ / "cmp" / "compare.csv").find(",**,0"), std::string::npos);
}

TEST_F(CliTest, CompareMissingFileOrKeysExitsTwo) {
  write_file(dir_ / "a.csv", results_csv("mdmt", {0.8, 0.7}));
  EXPECT_EQ(run_cli("compare " + (dir_ / "a.csv").string() + " " + (dir_ / "nope.csv").string()).code,
            kExitValidation);
  write_file(dir_ / "b.csv", results_csv("stl_tau1", {0.8, 0.7, 0.6}));
  const auto run = run_cli("compare --pairing fold " + (dir_ / "a.csv").string() + " " + (dir_ / "b.csv").string());
  EXPECT_EQ(run.code, kExitValidation);
  EXPECT_NE(run.output.find("only in B"), std::string::npos) << run.output;
}
