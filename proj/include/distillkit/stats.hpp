#pragma once

// Replication statistics: descriptive summaries with t-based confidence
// intervals, two-sample t-tests and one-way ANOVA with eta squared.

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "distillkit/corpus.hpp"
#include "distillkit/error.hpp"
#include "distillkit/predictions.hpp"

namespace distillkit {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kSignificance = 0.05;

// Student t and Fisher F distribution functions.
inline double t_cdf(double t, double df) {
  if (!(df > 0.0)) throw UsageError("t distribution needs df > 0");
  if (t == kInf) return 1.0;
  if (t == -kInf) return 0.0;
  return boost::math::cdf(boost::math::students_t_distribution<double>(df), t);
}

inline double t_two_sided_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t_distribution<double> dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

inline double t_quantile(double p, double df) {
  if (!(df > 0.0)) throw UsageError("t distribution needs df > 0");
  return boost::math::quantile(boost::math::students_t_distribution<double>(df), p);
}

inline double f_cdf(double f, double df1, double df2) {
  if (!(df1 > 0.0 && df2 > 0.0)) throw UsageError("F distribution needs positive degrees of freedom");
  if (f <= 0.0) return 0.0;
  if (f == kInf) return 1.0;
  return boost::math::cdf(boost::math::fisher_f_distribution<double>(df1, df2), f);
}

inline double f_survival(double f, double df1, double df2) {
  if (!(df1 > 0.0 && df2 > 0.0)) throw UsageError("F distribution needs positive degrees of freedom");
  if (f <= 0.0) return 1.0;
  if (f == kInf) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::fisher_f_distribution<double>(df1, df2), f));
}

inline double mean(std::span<const double> x) {
  if (x.empty()) throw DataError("mean of an empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Sample variance (n - 1 denominator); exactly 0 for a constant sample.
inline double variance(std::span<const double> x) {
  if (x.size() < 2 || std::adjacent_find(x.begin(), x.end(), std::not_equal_to<>()) == x.end()) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

struct FiveNumber {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

// Quantiles by linear interpolation between order statistics at h = (n-1)p.
inline double quantile(std::vector<double> sorted, double p) {
  std::sort(sorted.begin(), sorted.end());
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct Description {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::optional<std::pair<double, double>> ci;  // 95%, absent for n = 1
  FiveNumber five;
};

inline std::pair<double, double> confidence_interval(double m, double sd, std::size_t n, double level = 0.95) {
  if (n < 2) throw UsageError("a confidence interval needs n >= 2");
  const double half = t_quantile(0.5 + level / 2.0, static_cast<double>(n - 1)) * sd / std::sqrt(static_cast<double>(n));
  return {m - half, m + half};
}

inline Description describe(std::span<const double> x) {
  if (x.empty()) throw DataError("cannot describe an empty sample");
  Description d;
  d.n = x.size();
  d.mean = mean(x);
  d.sd = std::sqrt(variance(x));
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  d.min = *lo;
  d.max = *hi;
  if (d.n >= 2) d.ci = confidence_interval(d.mean, d.sd, d.n);
  const std::vector<double> v(x.begin(), x.end());
  d.five = {d.min, quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75), d.max};
  return d;
}

enum class TTestKind { welch, student };

struct TTestResult {
  double mean_difference = 0.0;
  double t_statistic = 0.0;
  double df = 0.0;
  double p_value = 1.0;
  bool significant = false;
};

// Two-sided two-sample t-test of mean(a) - mean(b).
inline TTestResult t_test(std::span<const double> a, std::span<const double> b, TTestKind kind = TTestKind::welch) {
  if (a.size() < 2 || b.size() < 2) throw DataError("t-test needs at least two scores per sample");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double va = variance(a), vb = variance(b);
  TTestResult r;
  r.mean_difference = mean(a) - mean(b);
  double se2;
  if (kind == TTestKind::welch) {
    const double qa = va / na, qb = vb / nb;
    se2 = qa + qb;
    r.df = se2 > 0.0 ? se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0)) : na + nb - 2.0;
  } else {
    r.df = na + nb - 2.0;
    const double pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / r.df;
    se2 = pooled * (1.0 / na + 1.0 / nb);
  }
  if (se2 == 0.0) {
    if (r.mean_difference == 0.0) {
      r.t_statistic = 0.0;
      r.p_value = 1.0;
    } else {
      r.t_statistic = r.mean_difference > 0.0 ? kInf : -kInf;
      r.p_value = 0.0;
    }
  } else {
    r.t_statistic = r.mean_difference / std::sqrt(se2);
    r.p_value = t_two_sided_p(r.t_statistic, r.df);
  }
  r.significant = r.p_value < kSignificance;
  return r;
}

struct AnovaResult {
  double f_statistic = 0.0;
  double p_value = 1.0;
  double eta_squared = 0.0;
  double ss_between = 0.0;
  double ss_within = 0.0;
  std::size_t df_between = 0;
  std::size_t df_within = 0;
};

inline AnovaResult anova(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw DataError("ANOVA needs at least two groups");
  std::size_t total_n = 0;
  double grand = 0.0;
  for (const auto& g : groups) {
    if (g.empty()) throw DataError("ANOVA groups must be non-empty");
    total_n += g.size();
    grand += std::accumulate(g.begin(), g.end(), 0.0);
  }
  if (total_n <= groups.size()) throw DataError("ANOVA needs more scores than groups");
  grand /= static_cast<double>(total_n);

  AnovaResult r;
  for (const auto& g : groups) {
    const double m = mean(g);
    r.ss_between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double v : g) r.ss_within += (v - m) * (v - m);
  }
  r.df_between = groups.size() - 1;
  r.df_within = total_n - groups.size();
  const double ss_total = r.ss_between + r.ss_within;
  if (r.ss_within == 0.0) {
    if (r.ss_between > 0.0) {
      r.f_statistic = kInf;
      r.p_value = 0.0;
      r.eta_squared = 1.0;
    }
    return r;
  }
  r.f_statistic = (r.ss_between / static_cast<double>(r.df_between)) / (r.ss_within / static_cast<double>(r.df_within));
  r.p_value = f_survival(r.f_statistic, static_cast<double>(r.df_between), static_cast<double>(r.df_within));
  r.eta_squared = ss_total > 0.0 ? r.ss_between / ss_total : 0.0;
  return r;
}

// Approach name -> scores, approaches kept in first-appearance order.
struct ReplicationSet {
  std::vector<std::string> approaches;
  std::vector<std::vector<double>> scores;

  std::size_t size() const noexcept { return approaches.size(); }

  void add(const std::string& name, double score) {
    auto it = std::find(approaches.begin(), approaches.end(), name);
    if (it == approaches.end()) {
      approaches.push_back(name);
      scores.emplace_back();
      it = approaches.end() - 1;
    }
    scores[static_cast<std::size_t>(it - approaches.begin())].push_back(score);
  }
};

// One replication per line: approach name (may contain spaces), then a
// score as the last field. Blank lines and '#' comments are skipped.
inline ReplicationSet read_replications(std::istream& in) {
  ReplicationSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto where = "line " + std::to_string(line_no) + ": ";
    const auto split = body.find_last_of(" \t");
    if (split == std::string_view::npos) throw DataError(where + "expected an approach name followed by a score");
    const auto name = detail::trim(body.substr(0, split));
    double score = 0.0;
    if (name.empty() || !detail::parse_number(body.substr(split + 1), score) || !std::isfinite(score))
      throw DataError(where + "expected an approach name followed by a finite score");
    set.add(std::string(name), score);
  }
  if (set.approaches.empty()) throw DataError("replication file has no scores");
  return set;
}

}  // namespace distillkit
