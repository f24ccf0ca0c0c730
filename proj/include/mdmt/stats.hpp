#pragma once

#include <span>
#include <string>
#include <vector>

#include "mdmt/experiment.hpp"

namespace mdmt {

/// Regularized incomplete beta function I_x(a, b).
double regularized_incomplete_beta(double x, double a, double b);

/// P(T <= t) for Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

enum class Direction {
  kAGreater,  // H1: mean(a - b) > 0
  kALess,     // H1: mean(a - b) < 0
};

struct TTestResult {
  double t = 0.0;
  int df = 0;
  double p = 0.5;
  /// sd(a - b) == 0. p is then 0.5 for a zero mean difference, otherwise 0
  /// or 1 depending on whether the sign matches the direction.
  bool degenerate = false;
};

/// One-tailed paired t-test on d = a - b with sample standard deviation.
TTestResult paired_t_one_tailed(std::span<const double> a, std::span<const double> b, Direction direction);

/// "***" for p < 0.001, "**" for p < 0.01, "*" for p < 0.05, "" otherwise.
std::string significance_stars(double p);

enum class Pairing {
  kAuto,   // group when the results hold at least two groups, fold otherwise
  kGroup,  // key (backbone, seed); observations are across-fold means and sds
  kFold,   // key (backbone, seed, fold); observations are per-fold values
};

Pairing parse_pairing(const std::string& text);
std::string to_string(Pairing pairing);

struct ComparisonReport {
  std::string metric;     // ACC, F1, GM
  std::string statistic;  // "mu" or "sigma"
  std::size_t n = 0;
  double t = 0.0;
  int df = 0;
  double p = 0.5;
  std::string stars;
  bool degenerate = false;
};

/// mu-tests (A greater) on per-key fold means and sigma-tests (A less) on
/// per-key fold standard deviations for ACC, F1 and GM of `task`. Fold
/// pairing yields mu rows only. Throws ValidationError when the two result
/// sets do not cover the same keys.
std::vector<ComparisonReport> compare_experiments(const std::vector<ResultRow>& a, const std::vector<ResultRow>& b,
                                                  Pairing pairing, const std::string& task = "tau1");

/// Resolved pairing for a result set (kAuto -> kGroup or kFold).
Pairing resolve_pairing(const std::vector<ResultRow>& rows, Pairing pairing, const std::string& task);

struct ComparisonBlock {
  std::string test;          // e.g. "MDMT vs STL_tau1"
  std::string column_group;  // e.g. "CV" or "LOCO"
  Pairing pairing = Pairing::kAuto;  // as resolved for the test
  std::vector<ComparisonReport> reports;
};

/// Aligned text table with one row per (statistic, test) and star cells per
/// (column group, metric), followed by the underlying t, df and p values.
std::string format_comparison_table(const std::vector<ComparisonBlock>& blocks);
std::string format_comparison_csv(const std::vector<ComparisonBlock>& blocks);

}  // namespace mdmt
