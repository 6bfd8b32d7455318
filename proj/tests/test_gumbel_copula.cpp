#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "scvae/gumbel_copula.hpp"
#include "test_support.hpp"

using namespace scvae;

using scvae::testing::kendall_tau_sample;
using scvae::testing::ks_uniform;

TEST(GumbelCdf, IndependenceAtAlphaOne) {
  for (double p1 : {0.01, 0.3, 0.77})
    for (double p2 : {0.2, 0.5, 0.999}) EXPECT_NEAR(gumbel_cdf(p1, p2, 1.0), p1 * p2, 1e-15);
}

TEST(GumbelCdf, UniformMarginBoundary) {
  EXPECT_EQ(gumbel_cdf(0.37, 1.0, 3.0), 0.37);
  EXPECT_EQ(gumbel_cdf(1.0, 0.12, 3.0), 0.12);
  EXPECT_EQ(gumbel_cdf(0.0, 0.5, 2.0), 0.0);
}

TEST(GumbelCdf, AlphaTwoAtHalves) {
  EXPECT_NEAR(gumbel_cdf(0.5, 0.5, 2.0), 0.37521422724648174, 1e-14);
}

TEST(GumbelCdf, SymmetricAndWithinFrechetBounds) {
  for (int i = 1; i < 40; ++i) {
    for (int j = 1; j < 40; ++j) {
      const double p1 = i / 40.0, p2 = j / 40.0;
      for (double a : {1.0, 1.3, 2.0, 7.0, 50.0}) {
        const double c = gumbel_cdf(p1, p2, a);
        EXPECT_EQ(c, gumbel_cdf(p2, p1, a));
        EXPECT_LE(c, std::min(p1, p2) + 1e-15);
        EXPECT_GE(c, std::max(0.0, p1 + p2 - 1.0) - 1e-15);
      }
    }
  }
}

TEST(GumbelCdf, NondecreasingInAlpha) {
  for (int i = 1; i < 20; ++i) {
    for (int j = 1; j < 20; ++j) {
      double prev = 0.0;
      for (double a = 1.0; a <= 50.0; a *= 1.25) {
        const double c = gumbel_cdf(i / 20.0, j / 20.0, a);
        EXPECT_GE(c, prev - 1e-15);
        prev = c;
      }
    }
  }
}

TEST(GumbelCdf, RejectsNanAndSmallAlpha) {
  EXPECT_THROW(gumbel_cdf(std::nan(""), 0.5, 2.0), Error);
  EXPECT_THROW(gumbel_cdf(0.5, 0.5, 0.9), Error);
}

TEST(GumbelCdf, TwoIncreasingOnRandomRectangles) {
  RandomStream rng = make_stream(21, "rect");
  for (int rep = 0; rep < 10000; ++rep) {
    double a1 = open_uniform(rng), b1 = open_uniform(rng), a2 = open_uniform(rng), b2 = open_uniform(rng);
    if (a1 > b1) std::swap(a1, b1);
    if (a2 > b2) std::swap(a2, b2);
    const double alpha = 1.0 + 10.0 * open_uniform(rng);
    const double vol = gumbel_cdf(b1, b2, alpha) - gumbel_cdf(a1, b2, alpha) - gumbel_cdf(b1, a2, alpha) +
                       gumbel_cdf(a1, a2, alpha);
    EXPECT_GE(vol, -1e-12);
  }
}

TEST(CellProbs, IndependenceExample) {
  const auto c = cell_probs(0.3, 0.4, 1.0);
  EXPECT_NEAR(c.p11, 0.12, 1e-15);
  EXPECT_NEAR(c.p10, 0.18, 1e-15);
  EXPECT_NEAR(c.p01, 0.28, 1e-15);
  EXPECT_NEAR(c.p00, 0.42, 1e-15);
}

TEST(CellProbs, AlphaTwoExample) {
  const auto c = cell_probs(0.5, 0.5, 2.0);
  EXPECT_NEAR(c.p11, 0.37521422724648174, 1e-14);
  EXPECT_NEAR(c.p10, 0.12478577275351826, 1e-14);
  EXPECT_NEAR(c.p01, 0.12478577275351826, 1e-14);
  EXPECT_NEAR(c.p00, 0.37521422724648174, 1e-14);
}

TEST(CellProbs, ComonotoneLimit) { EXPECT_NEAR(cell_probs(0.3, 0.4, 50.0).p11, 0.3, 1e-3); }

TEST(CellProbs, SumToOneAndNonnegative) {
  for (int i = 0; i <= 100; ++i) {
    for (int j = 0; j <= 100; ++j) {
      for (double a : {1.0, 1.000001, 3.0, 50.0}) {
        const auto c = cell_probs(clamp_prob(i / 100.0), clamp_prob(j / 100.0), a);
        EXPECT_NEAR(c.sum(), 1.0, 1e-12);
        EXPECT_GT(c.p11, 0.0);
        EXPECT_GT(c.p10, 0.0);
        EXPECT_GT(c.p01, 0.0);
        EXPECT_GT(c.p00, 0.0);
      }
    }
  }
}

TEST(LogJointBernoulli, SelectsCell) {
  const auto c = cell_probs(0.3, 0.4, 1.0);
  EXPECT_NEAR(log_joint_bernoulli(1, 1, c), std::log(0.12), 1e-14);
  EXPECT_NEAR(log_joint_bernoulli(0, 0, c), std::log(0.42), 1e-14);
}

TEST(LogJointBernoulli, EnumerationSumsToOne) {
  RandomStream rng = make_stream(22, "test");
  for (int rep = 0; rep < 200; ++rep) {
    const auto c = cell_probs(open_uniform(rng), open_uniform(rng), 1.0 + 5.0 * open_uniform(rng));
    double s = 0.0;
    for (int y1 : {0, 1})
      for (int y2 : {0, 1}) s += std::exp(log_joint_bernoulli(y1, y2, c));
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Dependence, TailAndKendall) {
  EXPECT_EQ(upper_tail_dependence(1.0), 0.0);
  EXPECT_NEAR(upper_tail_dependence(2.0), 2.0 - std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(upper_tail_dependence(1e9), 1.0, 1e-8);
  double prev = 0.0;
  for (double a = 1.0; a < 100.0; a *= 1.5) {
    EXPECT_GE(upper_tail_dependence(a), prev);
    prev = upper_tail_dependence(a);
  }
  EXPECT_EQ(kendall_tau(1.0), 0.0);
  EXPECT_EQ(kendall_tau(2.0), 0.5);
  EXPECT_EQ(kendall_tau(4.0), 0.75);
}

TEST(CopulaParam, AlphaStaysInRange) {
  for (double raw : {-1e3, -30.0, -1.0, 0.0, 2.0, 100.0, 1e4}) {
    const double a = CopulaParam{raw}.alpha();
    EXPECT_GE(a, kAlphaMin);
    EXPECT_LE(a, kAlphaMax);
  }
  for (double a : {1.01, 1.5, 2.0, 10.0, 49.0}) EXPECT_NEAR(CopulaParam::from_alpha(a).alpha(), a, 1e-12);
}

TEST(Sampler, KendallTauMatchesFormula) {
  for (double alpha : {1.0, 2.0, 4.0}) {
    RandomStream rng = make_stream(23, "kendall", static_cast<std::uint64_t>(alpha * 10));
    std::vector<std::pair<double, double>> xy(100000);
    for (auto& p : xy) p = sample_pair(alpha, rng);
    EXPECT_NEAR(kendall_tau_sample(xy), kendall_tau(alpha), 0.01) << "alpha=" << alpha;
  }
}

TEST(Sampler, MarginalsUniform) {
  // KS critical value at level 0.01 for n = 100k: 1.628 / sqrt(n)
  const double crit = 1.628 / std::sqrt(100000.0);
  for (double alpha : {1.0, 1.7, 5.0}) {
    RandomStream rng = make_stream(24, "ks", static_cast<std::uint64_t>(alpha * 10));
    std::vector<double> u1(100000), u2(100000);
    for (int i = 0; i < 100000; ++i) std::tie(u1[i], u2[i]) = sample_pair(alpha, rng);
    EXPECT_LT(ks_uniform(u1), crit);
    EXPECT_LT(ks_uniform(u2), crit);
  }
}

TEST(Sampler, EmpiricalCdfMatches) {
  const double alpha = 2.5;
  RandomStream rng = make_stream(25, "ecdf");
  std::vector<std::pair<double, double>> draws(200000);
  for (auto& d : draws) d = sample_pair(alpha, rng);
  for (double p1 : {0.25, 0.5, 0.75}) {
    for (double p2 : {0.25, 0.5, 0.75}) {
      int hits = 0;
      for (const auto& [u1, u2] : draws) hits += (u1 <= p1 && u2 <= p2) ? 1 : 0;
      EXPECT_NEAR(hits / 200000.0, gumbel_cdf(p1, p2, alpha), 0.01);
    }
  }
}

TEST(CdfPartials, IndependenceCase) {
  const auto d = cdf_partials(0.3, 0.6, 1.0);
  EXPECT_NEAR(d.dp1, 0.6, 1e-15);
  EXPECT_NEAR(d.dp2, 0.3, 1e-15);
}

TEST(CdfPartials, SymmetricDiagonal) {
  const auto d = cdf_partials(0.42, 0.42, 3.3);
  EXPECT_NEAR(d.dp1, d.dp2, 1e-15);
}

TEST(CdfPartials, AlphaTwoAtHalves) {
  // exact value sqrt(2) * 2^{-sqrt 2}; central difference at h = 1e-7 agrees to 1e-8
  EXPECT_NEAR(cdf_partials(0.5, 0.5, 2.0).dp1, 0.530633048967315, 1e-12);
  const double h = 1e-7;
  const double fd = (gumbel_cdf(0.5 + h, 0.5, 2.0) - gumbel_cdf(0.5 - h, 0.5, 2.0)) / (2 * h);
  EXPECT_NEAR(cdf_partials(0.5, 0.5, 2.0).dp1, fd, 1e-8);
}

TEST(CdfPartials, MatchFiniteDifferencesOnGrid) {
  RandomStream rng = make_stream(26, "test");
  const double h = 1e-6;
  // central differences of a quantity in [0, 1] carry roughly eps / h of roundoff
  const double noise = 4.0 * std::numeric_limits<double>::epsilon() / h;
  auto close = [&](double a, double f) { return std::abs(a - f) <= 1e-5 * std::abs(f) + noise; };
  for (int rep = 0; rep < 500; ++rep) {
    const double p1 = 0.02 + 0.96 * open_uniform(rng), p2 = 0.02 + 0.96 * open_uniform(rng);
    const double a = 1.0 + 1e-3 + 8.0 * open_uniform(rng);
    const auto d = cdf_partials(p1, p2, a);
    const double f1 = (gumbel_cdf(p1 + h, p2, a) - gumbel_cdf(p1 - h, p2, a)) / (2 * h);
    const double f2 = (gumbel_cdf(p1, p2 + h, a) - gumbel_cdf(p1, p2 - h, a)) / (2 * h);
    const double fa = (gumbel_cdf(p1, p2, a + h) - gumbel_cdf(p1, p2, a - h)) / (2 * h);
    EXPECT_TRUE(close(d.dp1, f1)) << p1 << ' ' << p2 << ' ' << a;
    EXPECT_TRUE(close(d.dp2, f2)) << p1 << ' ' << p2 << ' ' << a;
    EXPECT_TRUE(close(d.dalpha, fa)) << p1 << ' ' << p2 << ' ' << a;
  }
}

TEST(CellLogGrad, MatchesFiniteDifferences) {
  RandomStream rng = make_stream(27, "test");
  const double h = 1e-6;
  for (int rep = 0; rep < 200; ++rep) {
    const double p1 = 0.05 + 0.9 * open_uniform(rng), p2 = 0.05 + 0.9 * open_uniform(rng);
    const double a = 1.05 + 4.0 * open_uniform(rng);
    for (int y1 : {0, 1}) {
      for (int y2 : {0, 1}) {
        auto f = [&](double q1, double q2, double al) { return log_joint_bernoulli(y1, y2, cell_probs(q1, q2, al)); };
        const auto g = cell_log_grad(y1, y2, p1, p2, a);
        EXPECT_NEAR(g.log_prob, f(p1, p2, a), 1e-14);
        // a cell formed by subtraction has absolute error near eps, so its log
        // picks up eps / (cell * h) of difference noise
        const double noise = 4.0 * std::numeric_limits<double>::epsilon() / (std::exp(g.log_prob) * h);
        EXPECT_NEAR(g.dp1, (f(p1 + h, p2, a) - f(p1 - h, p2, a)) / (2 * h), 1e-5 * (1 + std::abs(g.dp1)) + noise);
        EXPECT_NEAR(g.dp2, (f(p1, p2 + h, a) - f(p1, p2 - h, a)) / (2 * h), 1e-5 * (1 + std::abs(g.dp2)) + noise);
        EXPECT_NEAR(g.dalpha, (f(p1, p2, a + h) - f(p1, p2, a - h)) / (2 * h),
                    1e-5 * (1 + std::abs(g.dalpha)) + noise);
      }
    }
  }
}
