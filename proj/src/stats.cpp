#include "mdmt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "mdmt/errors.hpp"

namespace mdmt {
namespace {

// Continued fraction for I_x(a, b), evaluated with the modified Lentz method.
double beta_continued_fraction(double x, double a, double b) {
  constexpr int kMaxIterations = 500;
  constexpr double kTolerance = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kTolerance) break;
  }
  return h;
}

// Upper tail P(T > t).
double student_t_upper(double t, double df) {
  const double x = df / (df + t * t);
  const double half_tail = 0.5 * regularized_incomplete_beta(x, 0.5 * df, 0.5);
  return t >= 0.0 ? half_tail : 1.0 - half_tail;
}

double mean_of(std::span<const double> v) {
  double total = 0.0;
  for (double x : v) total += x;
  return total / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double metric_value(const ResultRow& row, const std::string& metric) {
  if (metric == "ACC") return row.acc;
  if (metric == "F1") return row.f1;
  return row.gm;
}

using GroupKey = std::tuple<std::string, std::uint64_t>;
using FoldKey = std::tuple<std::string, std::uint64_t, int>;

template <typename Key>
std::string describe_key(const Key& key) {
  std::ostringstream out;
  out << "(backbone=" << std::get<0>(key) << ", seed=" << std::get<1>(key);
  if constexpr (std::tuple_size_v<Key> == 3) out << ", fold=" << std::get<2>(key);
  out << ')';
  return out.str();
}

template <typename Key>
void require_same_keys(const std::map<Key, std::vector<const ResultRow*>>& a,
                       const std::map<Key, std::vector<const ResultRow*>>& b) {
  std::vector<std::string> only_a, only_b;
  for (const auto& [key, rows] : a) {
    if (!b.count(key)) only_a.push_back(describe_key(key));
  }
  for (const auto& [key, rows] : b) {
    if (!a.count(key)) only_b.push_back(describe_key(key));
  }
  if (only_a.empty() && only_b.empty()) return;
  std::string message = "comparison keys do not match";
  for (const auto& k : only_a) message += "\n  only in A: " + k;
  for (const auto& k : only_b) message += "\n  only in B: " + k;
  throw ValidationError(message);
}

std::string format_number(double value, const char* format) {
  char buffer[48];
  std::snprintf(buffer, sizeof(buffer), format, value);
  return buffer;
}

}  // namespace

double regularized_incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw ContractError("incomplete beta: a and b must be positive");
  if (x < 0.0 || x > 1.0) throw ContractError("incomplete beta: x must lie in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(x, a, b) / a;
  return 1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw ContractError("student_t_cdf: df must be positive");
  if (std::isinf(t)) return t > 0.0 ? 1.0 : 0.0;
  return 1.0 - student_t_upper(t, df);
}

TTestResult paired_t_one_tailed(std::span<const double> a, std::span<const double> b, Direction direction) {
  if (a.size() != b.size()) throw ContractError("paired t-test: sequences differ in length");
  if (a.size() < 2) throw ContractError("paired t-test: needs at least 2 pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] - b[i];
  const double n = static_cast<double>(d.size());
  const double mean = mean_of(d);
  const double sd = sample_sd(d);

  TTestResult result;
  result.df = static_cast<int>(d.size()) - 1;
  const double sign = direction == Direction::kAGreater ? 1.0 : -1.0;
  if (sd == 0.0) {
    result.degenerate = true;
    if (mean == 0.0) {
      result.t = 0.0;
      result.p = 0.5;
    } else {
      result.t = mean > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      result.p = sign * mean > 0.0 ? 0.0 : 1.0;
    }
    return result;
  }
  result.t = mean / (sd / std::sqrt(n));
  result.p = student_t_upper(sign * result.t, static_cast<double>(result.df));
  return result;
}

std::string significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

Pairing parse_pairing(const std::string& text) {
  if (text == "auto") return Pairing::kAuto;
  if (text == "group" || text == "backbone") return Pairing::kGroup;
  if (text == "fold") return Pairing::kFold;
  throw ValidationError("pairing must be auto, group or fold; got '" + text + "'");
}

std::string to_string(Pairing pairing) {
  switch (pairing) {
    case Pairing::kAuto:
      return "auto";
    case Pairing::kGroup:
      return "group";
    case Pairing::kFold:
      return "fold";
  }
  return "auto";
}

Pairing resolve_pairing(const std::vector<ResultRow>& rows, Pairing pairing, const std::string& task) {
  if (pairing != Pairing::kAuto) return pairing;
  std::set<GroupKey> groups;
  for (const auto& r : rows) {
    if (r.task == task) groups.emplace(r.backbone, r.seed);
  }
  return groups.size() >= 2 ? Pairing::kGroup : Pairing::kFold;
}

std::vector<ComparisonReport> compare_experiments(const std::vector<ResultRow>& a, const std::vector<ResultRow>& b,
                                                  Pairing pairing, const std::string& task) {
  const Pairing resolved = resolve_pairing(a, pairing, task);
  const std::vector<std::string> metrics{"ACC", "F1", "GM"};
  std::vector<ComparisonReport> reports;

  auto emit = [&](const std::string& metric, const std::string& statistic, const std::vector<double>& xa,
                  const std::vector<double>& xb, Direction direction) {
    const auto test = paired_t_one_tailed(xa, xb, direction);
    reports.push_back(ComparisonReport{metric, statistic, xa.size(), test.t, test.df, test.p, significance_stars(test.p),
                                       test.degenerate});
  };

  if (resolved == Pairing::kFold) {
    std::map<FoldKey, std::vector<const ResultRow*>> ga, gb;
    for (const auto& r : a) {
      if (r.task == task) ga[{r.backbone, r.seed, r.fold}].push_back(&r);
    }
    for (const auto& r : b) {
      if (r.task == task) gb[{r.backbone, r.seed, r.fold}].push_back(&r);
    }
    require_same_keys(ga, gb);
    for (const auto& metric : metrics) {
      std::vector<double> xa, xb;
      for (const auto& [key, rows] : ga) {
        xa.push_back(metric_value(*rows.front(), metric));
        xb.push_back(metric_value(*gb.at(key).front(), metric));
      }
      emit(metric, "mu", xa, xb, Direction::kAGreater);
    }
    return reports;
  }

  std::map<GroupKey, std::vector<const ResultRow*>> ga, gb;
  for (const auto& r : a) {
    if (r.task == task) ga[{r.backbone, r.seed}].push_back(&r);
  }
  for (const auto& r : b) {
    if (r.task == task) gb[{r.backbone, r.seed}].push_back(&r);
  }
  require_same_keys(ga, gb);
  for (const auto& [key, rows] : ga) {
    if (rows.size() < 2 || gb.at(key).size() < 2) {
      throw ValidationError("group " + describe_key(key) + " needs at least 2 folds for a standard deviation");
    }
  }
  for (const std::string statistic : {"mu", "sigma"}) {
    for (const auto& metric : metrics) {
      std::vector<double> xa, xb;
      for (const auto& [key, rows] : ga) {
        std::vector<double> va, vb;
        for (const auto* r : rows) va.push_back(metric_value(*r, metric));
        for (const auto* r : gb.at(key)) vb.push_back(metric_value(*r, metric));
        xa.push_back(statistic == "mu" ? mean_of(va) : sample_sd(va));
        xb.push_back(statistic == "mu" ? mean_of(vb) : sample_sd(vb));
      }
      emit(metric, statistic, xa, xb, statistic == "mu" ? Direction::kAGreater : Direction::kALess);
    }
  }
  return reports;
}

std::string format_comparison_table(const std::vector<ComparisonBlock>& blocks) {
  std::vector<std::string> groups, tests;
  for (const auto& b : blocks) {
    if (std::find(groups.begin(), groups.end(), b.column_group) == groups.end()) groups.push_back(b.column_group);
    if (std::find(tests.begin(), tests.end(), b.test) == tests.end()) tests.push_back(b.test);
  }
  const std::vector<std::string> metrics{"ACC", "F1", "GM"};
  auto cell = [&](const std::string& statistic, const std::string& test, const std::string& group,
                  const std::string& metric) -> std::string {
    for (const auto& b : blocks) {
      if (b.test != test || b.column_group != group) continue;
      for (const auto& r : b.reports) {
        if (r.statistic == statistic && r.metric == metric) return r.stars;
      }
      return "n/a";
    }
    return "n/a";
  };

  std::size_t test_width = 4;
  for (const auto& t : tests) test_width = std::max(test_width, t.size());
  constexpr std::size_t kCell = 5;
  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };

  std::ostringstream out;
  std::string line = pad("Statistic", 10) + "| " + pad("Test", test_width) + " ";
  for (const auto& g : groups) line += "| " + pad(g, 3 * (kCell + 1) - 1) + " ";
  out << line << '\n';
  line = pad("", 10) + "| " + pad("", test_width) + " ";
  for (std::size_t g = 0; g < groups.size(); ++g) {
    line += "|";
    for (const auto& m : metrics) line += " " + pad(m, kCell);
    line += " ";
  }
  out << line << '\n' << std::string(line.size(), '-') << '\n';
  for (const std::string statistic : {"mu", "sigma"}) {
    for (const auto& test : tests) {
      line = pad(statistic, 10) + "| " + pad(test, test_width) + " ";
      for (const auto& g : groups) {
        line += "|";
        for (const auto& m : metrics) line += " " + pad(cell(statistic, test, g, m), kCell);
        line += " ";
      }
      out << line << '\n';
    }
  }
  out << "\nSignificance: * p < 0.05, ** p < 0.01, *** p < 0.001 (one-tailed paired t-test;\n"
         "mu tests an increase of the mean, sigma a decrease of the across-fold standard deviation)\n\n";
  for (const auto& b : blocks) {
    out << b.test << " [" << b.column_group << "] pairing=" << to_string(b.pairing) << '\n';
    for (const auto& r : b.reports) {
      out << "  " << pad(r.statistic, 6) << pad(r.metric, 4) << " n=" << r.n << " t=" << format_number(r.t, "%.6g")
          << " df=" << r.df << " p=" << format_number(r.p, "%.6g") << (r.degenerate ? " (degenerate: sd of d is 0)" : "")
          << '\n';
    }
  }
  return out.str();
}

std::string format_comparison_csv(const std::vector<ComparisonBlock>& blocks) {
  std::ostringstream out;
  out << "# schema_version=" << kResultSchemaVersion << '\n';
  out << "test,split,pairing,statistic,metric,n,t,df,p,stars,degenerate\n";
  for (const auto& b : blocks) {
    for (const auto& r : b.reports) {
      out << b.test << ',' << b.column_group << ',' << to_string(b.pairing) << ',' << r.statistic << ',' << r.metric << ',' << r.n << ','
          << format_number(r.t, "%.10g") << ',' << r.df << ',' << format_number(r.p, "%.10g") << ',' << r.stars << ','
          << (r.degenerate ? 1 : 0) << '\n';
    }
  }
  return out.str();
}

}  // namespace mdmt
