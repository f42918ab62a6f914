#include <gtest/gtest.h>

#include <sstream>

#include "distillkit/stats.hpp"
#include "oracles/distributions.hpp"

namespace dk = distillkit;

namespace {
using Sample = std::vector<double>;
}

TEST(Describe, IntervalFromMeanAndSd) {
  const auto [lo, hi] = dk::confidence_interval(0.8270, 0.0089, 5);
  EXPECT_NEAR(lo, 0.8159, 1e-4);
  EXPECT_NEAR(hi, 0.8380, 1e-4);
  EXPECT_NEAR(dk::t_quantile(0.975, 4), 2.776, 5e-4);
}

TEST(Describe, TextbookValues) {
  const Sample x{1, 2, 3};
  const auto d = dk::describe(x);
  EXPECT_EQ(d.mean, 2.0);
  EXPECT_EQ(d.sd, 1.0);
  EXPECT_EQ(d.min, 1.0);
  EXPECT_EQ(d.max, 3.0);
  ASSERT_TRUE(d.ci);
  EXPECT_NEAR(d.mean - d.ci->first, d.ci->second - d.mean, 1e-15);
  EXPECT_EQ(d.five.median, 2.0);
  EXPECT_EQ(d.five.q1, 1.5);
  EXPECT_EQ(d.five.q3, 2.5);
}

TEST(Describe, ConstantAndSingleton) {
  const auto d = dk::describe(Sample{0.287, 0.287, 0.287});
  EXPECT_EQ(d.sd, 0.0);
  EXPECT_EQ(d.ci->first, d.mean);
  EXPECT_EQ(d.ci->second, d.mean);
  EXPECT_FALSE(dk::describe(Sample{0.5}).ci);
  EXPECT_THROW(dk::describe(Sample{}), dk::DataError);
}

TEST(Describe, IntervalWidensWithSd) {
  double last = 0.0;
  for (double sd = 0.01; sd < 0.2; sd += 0.01) {
    const auto [lo, hi] = dk::confidence_interval(0.5, sd, 6);
    EXPECT_GT(hi - lo, last);
    last = hi - lo;
  }
}

TEST(TTest, IdenticalSamples) {
  const Sample a{1, 2, 3};
  const auto r = dk::t_test(a, a);
  EXPECT_EQ(r.mean_difference, 0.0);
  EXPECT_EQ(r.t_statistic, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
  EXPECT_FALSE(r.significant);
}

TEST(TTest, ZeroVarianceSentinels) {
  const Sample c{0.287, 0.287, 0.287, 0.287, 0.287};
  const auto same = dk::t_test(c, c);
  EXPECT_EQ(same.t_statistic, 0.0);
  EXPECT_EQ(same.p_value, 1.0);
  const Sample d{0.8, 0.8, 0.8};
  const auto r = dk::t_test(c, d);
  EXPECT_EQ(r.t_statistic, -dk::kInf);
  EXPECT_EQ(r.p_value, 0.0);
  EXPECT_TRUE(r.significant);
  EXPECT_EQ(dk::t_test(d, c).t_statistic, dk::kInf);
  // One constant sample next to a varying one is an ordinary finite test.
  const auto mixed = dk::t_test(c, Sample{0.8, 0.82, 0.85});
  EXPECT_TRUE(std::isfinite(mixed.t_statistic));
}

TEST(TTest, ShiftedSamples) {
  const Sample a{1, 2, 3, 4, 5}, b{2, 3, 4, 5, 6};
  const auto r = dk::t_test(a, b);
  EXPECT_EQ(r.mean_difference, -1.0);
  EXPECT_NEAR(r.t_statistic, -1.0, 1e-12);
  EXPECT_NEAR(r.df, 8.0, 1e-12);
  EXPECT_NEAR(r.p_value, 0.347, 5e-4);
  EXPECT_NEAR(r.p_value, 2.0 * oracle::t_cdf(-1.0, 8.0), 1e-6);
  const auto s = dk::t_test(a, b, dk::TTestKind::student);
  EXPECT_NEAR(s.t_statistic, -1.0, 1e-12);
  EXPECT_EQ(s.df, 8.0);
}

TEST(TTest, AntisymmetricAndNeedsTwoScores) {
  const Sample a{0.81, 0.83, 0.82, 0.84}, b{0.70, 0.75, 0.73};
  const auto ab = dk::t_test(a, b), ba = dk::t_test(b, a);
  EXPECT_EQ(ab.t_statistic, -ba.t_statistic);
  EXPECT_EQ(ab.p_value, ba.p_value);
  EXPECT_EQ(ab.significant, ab.p_value < 0.05);
  EXPECT_THROW(dk::t_test(Sample{1}, b), dk::DataError);
}

TEST(Anova, PerfectSeparation) {
  const auto r = dk::anova({{0, 0}, {1, 1}});
  EXPECT_EQ(r.eta_squared, 1.0);
  EXPECT_EQ(r.p_value, 0.0);
  EXPECT_EQ(r.f_statistic, dk::kInf);
}

TEST(Anova, IdenticalGroups) {
  const auto r = dk::anova({{1, 2, 3}, {1, 2, 3}});
  EXPECT_EQ(r.f_statistic, 0.0);
  EXPECT_EQ(r.eta_squared, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
  const auto flat = dk::anova({{2, 2}, {2, 2}});
  EXPECT_EQ(flat.f_statistic, 0.0);
  EXPECT_EQ(flat.eta_squared, 0.0);
}

TEST(Anova, HandComputed) {
  const auto r = dk::anova({{1, 2, 3}, {2, 3, 4}, {3, 4, 5}});
  EXPECT_NEAR(r.ss_between, 6.0, 1e-12);
  EXPECT_NEAR(r.ss_within, 6.0, 1e-12);
  EXPECT_NEAR(r.f_statistic, 3.0, 1e-12);
  EXPECT_NEAR(r.eta_squared, 0.5, 1e-12);
  EXPECT_NEAR(r.p_value, 1.0 - oracle::f_cdf(3.0, 2, 6), 1e-6);
}

TEST(Anova, ShiftInvariantAndBounded) {
  dk::Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    std::vector<Sample> g(3);
    for (auto& s : g)
      for (int k = 0; k < 4; ++k) s.push_back(rng.uniform(0.6, 0.9));
    const auto r = dk::anova(g);
    for (auto& s : g)
      for (auto& v : s) v += 0.25;
    const auto shifted = dk::anova(g);
    EXPECT_NEAR(r.f_statistic, shifted.f_statistic, 1e-8 * std::max(1.0, r.f_statistic));
    EXPECT_NEAR(r.p_value, shifted.p_value, 1e-9);
    EXPECT_NEAR(r.eta_squared, shifted.eta_squared, 1e-10);
    EXPECT_GE(r.eta_squared, 0.0);
    EXPECT_LE(r.eta_squared, 1.0);
  }
  EXPECT_THROW(dk::anova({{1, 2}}), dk::DataError);
  EXPECT_THROW(dk::anova({{1}, {2}}), dk::DataError);
  EXPECT_THROW(dk::anova({{1, 2}, {}}), dk::DataError);
}

TEST(Distributions, AgreeWithIntegrationOracle) {
  dk::Rng rng(77);
  for (int i = 0; i < 60; ++i) {
    const double df = 1.0 + static_cast<double>(rng.below(30));
    const double t = rng.uniform(-6.0, 6.0);
    EXPECT_NEAR(dk::t_cdf(t, df), oracle::t_cdf(t, df), 1e-6) << "t=" << t << " df=" << df;
    const double d1 = 1.0 + static_cast<double>(rng.below(6)), d2 = 2.0 + static_cast<double>(rng.below(30));
    const double f = rng.uniform(0.0, 8.0);
    EXPECT_NEAR(dk::f_cdf(f, d1, d2), oracle::f_cdf(f, d1, d2), 1e-6) << "f=" << f << " d=" << d1 << "," << d2;
    EXPECT_NEAR(dk::f_survival(f, d1, d2), 1.0 - oracle::f_cdf(f, d1, d2), 1e-6);
  }
}

TEST(Replications, ParsesNamesWithSpaces) {
  std::istringstream in("# approach score\ndistilled model 0.82\nBERT\t0.15\n\ndistilled model 0.83\n");
  const auto set = dk::read_replications(in);
  ASSERT_EQ(set.size(), 2u);
  EXPECT_EQ(set.approaches[0], "distilled model");
  EXPECT_EQ(set.scores[0], (Sample{0.82, 0.83}));
  EXPECT_EQ(set.scores[1], (Sample{0.15}));
}

TEST(Replications, RejectsBadLines) {
  std::istringstream missing("lonely\n");
  EXPECT_THROW(dk::read_replications(missing), dk::DataError);
  std::istringstream bad("a b c\n");
  EXPECT_THROW(dk::read_replications(bad), dk::DataError);
  std::istringstream empty("# nothing\n");
  EXPECT_THROW(dk::read_replications(empty), dk::DataError);
}
