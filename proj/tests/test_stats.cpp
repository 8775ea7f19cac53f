#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "nsolver/stats.hpp"

using namespace nsolver::stats;

namespace {

std::vector<double> normal_sample(std::size_t n, double mean, double sd, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d(mean, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

/// Violation ratio by brute force on a dense midpoint grid, with the quantile
/// taken as the order statistic floor(t * n) (equal to the right-continuous
/// inverse away from the breakpoints k / n).
double dense_ratio(std::vector<double> a, std::vector<double> b, std::size_t points = 1000000) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  long double viol = 0, total = 0;
  for (std::size_t i = 0; i < points; ++i) {
    const double t = (i + 0.5) / static_cast<double>(points);
    const double qa = a[std::min(a.size() - 1, static_cast<std::size_t>(t * a.size()))];
    const double qb = b[std::min(b.size() - 1, static_cast<std::size_t>(t * b.size()))];
    const double g = qb - qa;
    total += g * g;
    if (g > 0) viol += g * g;
  }
  return total == 0 ? 0.5 : static_cast<double>(viol / total);
}

}  // namespace

TEST(ViolationRatio, DominatedAndIdentical) {
  EXPECT_EQ(violation_ratio({1, 1, 1}, {0, 0, 0}), 0.0);
  EXPECT_EQ(violation_ratio({0, 0, 0}, {1, 1, 1}), 1.0);
  EXPECT_EQ(violation_ratio({3, 1, 2}, {1, 2, 3}), 0.5);
  EXPECT_THROW(violation_ratio({}, {1}), std::invalid_argument);
}

TEST(ViolationRatio, EmpiricalQuantileIsRightContinuousInverse) {
  const std::vector<double> s{1, 2, 3, 4};
  EXPECT_EQ(empirical_quantile(s, 0.0), 1);
  EXPECT_EQ(empirical_quantile(s, 0.25), 1);
  EXPECT_EQ(empirical_quantile(s, 0.2500001), 2);
  EXPECT_EQ(empirical_quantile(s, 1.0), 4);
}

TEST(ViolationRatio, MatchesDenseIntegration) {
  for (std::uint64_t k = 0; k < 30; ++k) {
    const auto a = normal_sample(10, 0.0, 1.0, 2 * k);
    const auto b = normal_sample(10, 0.3, 1.5, 2 * k + 1);
    EXPECT_NEAR(violation_ratio(a, b), dense_ratio(a, b), 1e-3) << k;
  }
}

TEST(ViolationRatio, ComplementAndTranslation) {
  for (std::uint64_t k = 0; k < 20; ++k) {
    auto a = normal_sample(7, 0.0, 1.0, 100 + k);
    auto b = normal_sample(9, 0.2, 1.0, 200 + k);
    const double ab = violation_ratio(a, b), ba = violation_ratio(b, a);
    EXPECT_NEAR(ab + ba, 1.0, 1e-12);
    for (auto& x : a) x += 0.5;
    for (auto& x : b) x += 0.5;
    EXPECT_NEAR(violation_ratio(a, b), ab, 1e-9);
  }
}

TEST(Aso, SeparatedSetsAreStochasticallyDominant) {
  const ScoreSet a{"a", {10, 11, 12, 13, 14}}, b{"b", {1, 2, 3, 4, 5}};
  const auto r = aso_epsilon_min(a, b, 0.05, 200, 1);
  EXPECT_EQ(r.eps_min, 0.0);
  EXPECT_EQ(r.dominance, Dominance::stochastic);
  const auto back = aso_epsilon_min(b, a, 0.05, 200, 1);
  EXPECT_EQ(back.eps_min, 1.0);
  EXPECT_EQ(back.dominance, Dominance::none);
}

TEST(Aso, IdenticalConstantsGiveNoDominance) {
  const ScoreSet a{"a", {3, 3, 3}};
  const auto r = aso_epsilon_min(a, a, 0.05, 100, 0);
  EXPECT_GE(r.eps_min, 0.0);
  EXPECT_LE(r.eps_min, 1.0);
  EXPECT_EQ(r.dominance, Dominance::none);
}

TEST(Aso, SymmetryOnSeparatedSamples) {
  const ScoreSet a{"a", normal_sample(10, 1.0, 0.5, 1)}, b{"b", normal_sample(10, 0.0, 0.5, 2)};
  const auto ab = aso_epsilon_min(a, b, 0.05, 500, 3);
  const auto ba = aso_epsilon_min(b, a, 0.05, 500, 3);
  EXPECT_LT(ab.eps_min, 0.5);
  EXPECT_GT(ba.eps_min, 0.5);
}

TEST(Aso, DeterministicAndValidated) {
  const ScoreSet a{"a", normal_sample(8, 0.0, 1.0, 5)}, b{"b", normal_sample(8, 0.1, 1.0, 6)};
  EXPECT_EQ(aso_epsilon_min(a, b, 0.05, 300, 9).eps_min, aso_epsilon_min(a, b, 0.05, 300, 9).eps_min);
  EXPECT_THROW(aso_epsilon_min(a, b, 0.05, 99, 9), std::invalid_argument);
  EXPECT_THROW(aso_epsilon_min(a, b, 1.0, 100, 9), std::invalid_argument);
  EXPECT_THROW(aso_epsilon_min(a, ScoreSet{"e", {}}, 0.05, 100, 9), std::invalid_argument);
  EXPECT_THROW(aso_epsilon_min(a, ScoreSet{"n", {NAN}}, 0.05, 100, 9), std::invalid_argument);
}

TEST(Aso, ShiftingAUpNeverRaisesEpsilon) {
  auto base = normal_sample(10, 0.0, 1.0, 11);
  const ScoreSet b{"b", normal_sample(10, 0.0, 1.0, 12)};
  double prev = 2.0;
  for (double shift : {-1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0}) {
    ScoreSet a{"a", base};
    for (auto& x : a.scores) x += shift;
    const double eps = aso_epsilon_min(a, b, 0.05, 1000, 4).eps_min;
    EXPECT_LE(eps, prev + 1e-12) << shift;
    prev = eps;
  }
}

TEST(Bonferroni, Division) {
  EXPECT_EQ(bonferroni(0.05, 5), 0.01);
  EXPECT_EQ(bonferroni(0.05, 1), 0.05);
  EXPECT_THROW(bonferroni(0.05, 0), std::invalid_argument);
}

TEST(Bonferroni, CorrectionRaisesEpsilon) {
  const ScoreSet a{"a", normal_sample(10, 1.0, 1.0, 21)}, b{"b", normal_sample(10, 0.0, 1.0, 22)};
  const auto plain = aso_epsilon_min(a, b, 0.05, 1000, 7);
  const auto corrected = aso_epsilon_min(a, b, bonferroni(0.05, 5), 1000, 7);
  ASSERT_GT(plain.sigma, 0.0);
  ASSERT_LT(plain.eps_min, 1.0);
  EXPECT_GT(corrected.eps_min, plain.eps_min);
}

TEST(Pairwise, ShapeAndIdenticalSets) {
  const ScoreSet a{"a", normal_sample(6, 0.0, 1.0, 1)};
  ScoreSet b = a;
  b.label = "b";
  const auto m = pairwise_matrix({a, b}, 0.05, 200, 3);
  ASSERT_EQ(m.eps.size(), 2u);
  ASSERT_EQ(m.eps[0].size(), 2u);
  EXPECT_EQ(m.eps[0][1], m.eps[1][0]);
  EXPECT_TRUE(std::isnan(m.eps[0][0]));
  EXPECT_EQ(m.alpha_used, 0.025);
  EXPECT_TRUE(m.to_json()["eps_min"][0][0].is_null());
  EXPECT_EQ(m.to_csv().substr(0, 10), "model,a,b\n");
  EXPECT_THROW(pairwise_matrix({a}), std::invalid_argument);
}

TEST(Pairwise, WellSeparatedNormals) {
  const ScoreSet hi{"hi", normal_sample(10, 1.0, 0.01, 31)}, lo{"lo", normal_sample(10, 0.0, 0.01, 32)};
  const auto m = pairwise_matrix({hi, lo}, 0.05, 1000, 0);
  EXPECT_EQ(m.eps[0][1], 0.0);
  EXPECT_EQ(m.eps[1][0], 1.0);
}

TEST(ScoresCsv, ParsesAndRejects) {
  const auto sets = read_scores_csv("model,seed,score\nA,0,1.5\nB,0,0.5\nA,1,2.5\n\n");
  ASSERT_EQ(sets.size(), 2u);
  EXPECT_EQ(sets[0].label, "A");
  EXPECT_EQ(sets[0].scores, (std::vector<double>{1.5, 2.5}));
  EXPECT_THROW(read_scores_csv("a,b\n"), nsolver::FormatError);
  EXPECT_THROW(read_scores_csv("model,seed,score\nA,0,x\n"), nsolver::FormatError);
  EXPECT_THROW(read_scores_csv("model,seed,score\nA,0\n"), nsolver::FormatError);
}
