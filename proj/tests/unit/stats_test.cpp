#include <gtest/gtest.h>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <random>

#include "mdmt/errors.hpp"
#include "mdmt/stats.hpp"

using namespace mdmt;

namespace {

double reference_upper_tail(double t, double df) {
  const boost::math::students_t dist(df);
  return boost::math::cdf(boost::math::complement(dist, t));
}

ResultRow row(const std::string& experiment, std::uint64_t seed, int fold, double acc) {
  ResultRow r;
  r.experiment = experiment;
  r.backbone = "cnn";
  r.seed = seed;
  r.fold = fold;
  r.task = "tau1";
  r.acc = acc;
  r.f1 = acc - 0.01;
  r.gm = acc - 0.02;
  return r;
}

}  // namespace

TEST(StudentT, MatchesReferenceCdf) {
  EXPECT_NEAR(student_t_cdf(2.776, 4), 0.975, 1e-4);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 500; ++i) {
    const double df = std::uniform_int_distribution<int>(1, 60)(rng);
    const double t = std::uniform_real_distribution<double>(-12, 12)(rng);
    const boost::math::students_t dist(df);
    EXPECT_NEAR(student_t_cdf(t, df), boost::math::cdf(dist, t), 1e-12) << "t=" << t << " df=" << df;
  }
  EXPECT_EQ(student_t_cdf(0.0, 7), 0.5);
}

TEST(IncompleteBeta, MatchesReference) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 300; ++i) {
    const double a = std::uniform_real_distribution<double>(0.2, 30)(rng);
    const double b = std::uniform_real_distribution<double>(0.2, 30)(rng);
    const double x = std::uniform_real_distribution<double>(0, 1)(rng);
    EXPECT_NEAR(regularized_incomplete_beta(x, a, b), boost::math::ibeta(a, b, x), 1e-12);
  }
  EXPECT_THROW(regularized_incomplete_beta(1.5, 1, 1), ContractError);
}

TEST(PairedT, WorkedExample) {
  const std::vector<double> a{1, 2, 3, 4, 5}, b(5, 0.0);
  const auto r = paired_t_one_tailed(a, b, Direction::kAGreater);
  EXPECT_NEAR(r.t, 4.242641, 1e-6);
  EXPECT_EQ(r.df, 4);
  EXPECT_NEAR(r.p, reference_upper_tail(r.t, 4), 1e-10);
  EXPECT_NEAR(r.p, 0.00662, 1e-4);
  EXPECT_FALSE(r.degenerate);
  const auto less = paired_t_one_tailed(a, b, Direction::kALess);
  EXPECT_NEAR(less.p, 1.0 - r.p, 1e-12);
}

TEST(PairedT, DegenerateConventions) {
  const std::vector<double> a{0.7, 0.8, 0.9};
  const auto same = paired_t_one_tailed(a, a, Direction::kAGreater);
  EXPECT_TRUE(same.degenerate);
  EXPECT_EQ(same.p, 0.5);
  const std::vector<double> shifted{0.75, 0.85, 0.95};
  const auto up = paired_t_one_tailed(shifted, shifted, Direction::kAGreater);
  EXPECT_EQ(up.p, 0.5);
  // Exactly representable so that every difference is exactly 1.
  const std::vector<double> quarter{0.25, 0.5, 0.75}, plus{1.25, 1.5, 1.75};
  EXPECT_EQ(paired_t_one_tailed(plus, quarter, Direction::kAGreater).p, 0.0);
  EXPECT_EQ(paired_t_one_tailed(plus, quarter, Direction::kALess).p, 1.0);
  EXPECT_TRUE(paired_t_one_tailed(plus, quarter, Direction::kALess).degenerate);
}

TEST(PairedT, AntisymmetricAndMatchesOracle) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + trial % 15;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = noise(rng) + 0.3;
      b[i] = noise(rng);
    }
    const auto ab = paired_t_one_tailed(a, b, Direction::kAGreater);
    const auto ba = paired_t_one_tailed(b, a, Direction::kALess);
    EXPECT_NEAR(ab.p, ba.p, 1e-12);
    EXPECT_NEAR(ab.t, -ba.t, 1e-12);
    EXPECT_NEAR(ab.p, reference_upper_tail(ab.t, static_cast<double>(n - 1)), 1e-10);
  }
}

TEST(PairedT, RejectsShortOrMismatchedInput) {
  const std::vector<double> one{1.0}, two{1.0, 2.0};
  EXPECT_THROW(paired_t_one_tailed(one, one, Direction::kAGreater), ContractError);
  EXPECT_THROW(paired_t_one_tailed(two, one, Direction::kAGreater), ContractError);
}

TEST(Stars, ThresholdsAreStrict) {
  EXPECT_EQ(significance_stars(0.05), "");
  EXPECT_EQ(significance_stars(0.0499999), "*");
  EXPECT_EQ(significance_stars(0.01), "*");
  EXPECT_EQ(significance_stars(0.0099999), "**");
  EXPECT_EQ(significance_stars(0.001), "**");
  EXPECT_EQ(significance_stars(0.0009999), "***");
  EXPECT_EQ(significance_stars(0.0), "***");
  EXPECT_EQ(significance_stars(0.5), "");
}

TEST(Pairing, ParsesAndResolves) {
  EXPECT_EQ(parse_pairing("auto"), Pairing::kAuto);
  EXPECT_EQ(parse_pairing("backbone"), Pairing::kGroup);
  EXPECT_EQ(parse_pairing("fold"), Pairing::kFold);
  EXPECT_THROW(parse_pairing("seed"), ValidationError);

  std::vector<ResultRow> one_group{row("mdmt", 1, 0, 0.8), row("mdmt", 1, 1, 0.9)};
  EXPECT_EQ(resolve_pairing(one_group, Pairing::kAuto, "tau1"), Pairing::kFold);
  one_group.push_back(row("mdmt", 2, 0, 0.7));
  EXPECT_EQ(resolve_pairing(one_group, Pairing::kAuto, "tau1"), Pairing::kGroup);
  EXPECT_EQ(resolve_pairing(one_group, Pairing::kFold, "tau1"), Pairing::kFold);
}

TEST(Compare, GroupPairingUsesFoldMeansAndSds) {
  std::vector<ResultRow> a, b;
  const double acc_a[3][2] = {{0.80, 0.90}, {0.70, 0.74}, {0.85, 0.87}};
  const double acc_b[3][2] = {{0.70, 0.90}, {0.60, 0.70}, {0.80, 0.82}};
  for (std::uint64_t s = 0; s < 3; ++s) {
    for (int f = 0; f < 2; ++f) {
      a.push_back(row("mdmt", s, f, acc_a[s][f]));
      b.push_back(row("stl_tau1", s, f, acc_b[s][f]));
    }
  }
  const auto reports = compare_experiments(a, b, Pairing::kAuto, "tau1");
  ASSERT_EQ(reports.size(), 6u);
  EXPECT_EQ(reports[0].statistic, "mu");
  EXPECT_EQ(reports[0].metric, "ACC");
  EXPECT_EQ(reports[0].n, 3u);
  std::vector<double> mean_a, mean_b, sd_a, sd_b;
  for (int s = 0; s < 3; ++s) {
    mean_a.push_back((acc_a[s][0] + acc_a[s][1]) / 2);
    mean_b.push_back((acc_b[s][0] + acc_b[s][1]) / 2);
    sd_a.push_back(std::abs(acc_a[s][0] - acc_a[s][1]) / std::sqrt(2.0));
    sd_b.push_back(std::abs(acc_b[s][0] - acc_b[s][1]) / std::sqrt(2.0));
  }
  const auto mu = paired_t_one_tailed(mean_a, mean_b, Direction::kAGreater);
  EXPECT_NEAR(reports[0].p, mu.p, 1e-12);
  EXPECT_EQ(reports[3].statistic, "sigma");
  const auto sigma = paired_t_one_tailed(sd_a, sd_b, Direction::kALess);
  EXPECT_NEAR(reports[3].p, sigma.p, 1e-12);
  EXPECT_EQ(reports[0].stars, significance_stars(reports[0].p));
}

TEST(Compare, FoldPairingGivesMuRowsOnly) {
  std::vector<ResultRow> a, b;
  for (int f = 0; f < 5; ++f) {
    a.push_back(row("mdmt", 1, f, 0.8 + 0.01 * f));
    b.push_back(row("ft", 1, f, 0.7 + 0.012 * f));
  }
  const auto reports = compare_experiments(a, b, Pairing::kAuto, "tau1");
  ASSERT_EQ(reports.size(), 3u);
  for (const auto& r : reports) {
    EXPECT_EQ(r.statistic, "mu");
    EXPECT_EQ(r.n, 5u);
  }
}

TEST(Compare, MismatchedKeysAreNamed) {
  std::vector<ResultRow> a{row("mdmt", 1, 0, 0.8), row("mdmt", 1, 1, 0.8)};
  std::vector<ResultRow> b{row("stl", 1, 0, 0.8), row("stl", 2, 1, 0.8)};
  try {
    compare_experiments(a, b, Pairing::kFold, "tau1");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("only in B: (backbone=cnn, seed=2, fold=1)"), std::string::npos) << e.what();
  }
}

TEST(Compare, TableShowsStarsAndPairing) {
  ComparisonBlock block;
  block.test = "MDMT vs STL_tau1";
  block.column_group = "CV";
  block.pairing = Pairing::kGroup;
  block.reports = {ComparisonReport{"ACC", "mu", 10, 5.0, 9, 0.0004, "***", false},
                   ComparisonReport{"F1", "mu", 10, 2.0, 9, 0.03, "*", false},
                   ComparisonReport{"GM", "mu", 10, 0.1, 9, 0.4, "", false}};
  const auto text = format_comparison_table({block});
  EXPECT_NE(text.find("MDMT vs STL_tau1 [CV] pairing=group"), std::string::npos) << text;
  EXPECT_NE(text.find("| ***   *           "), std::string::npos) << text;
  const auto csv = format_comparison_csv({block});
  EXPECT_NE(csv.find("MDMT vs STL_tau1,CV,group,mu,ACC,10,5,9,0.0004,***,0"), std::string::npos) << csv;
}
