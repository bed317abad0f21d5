#include "lnoise/theory.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace lnoise;
using namespace lnoise::theory;

namespace {

// Oracle: accuracy of scoring the noisy posterior against a noisy label,
// m_k (1 - eps) + (eps / s) (1 - m_k), with m_k from the affine noisy posterior.
double noisy_accuracy_oracle(double m, double eps, int s) {
  const double mk = m * (1.0 - eps * (s + 1) / s) + eps / s;
  return mk * (1.0 - eps) + (eps / s) * (1.0 - mk);
}

}  // namespace

TEST(NoisyPosteriorLaw, HandValues) {
  EXPECT_NEAR(noisy_posterior_uniform(0.9, 0.2, 2), 0.74, 1e-15);
  EXPECT_EQ(noisy_posterior_uniform(0.37, 0.0, 5), 0.37);
  for (int c : {2, 3, 10})
    for (double m : {0.0, 0.3, 1.0})
      EXPECT_NEAR(noisy_posterior_uniform(m, static_cast<double>(c - 1) / c, c), 1.0 / c, 1e-15);
}

TEST(NoisyPosteriorLaw, ClassFormReducesToUniform) {
  for (int c : {2, 4, 10})
    for (double e : {0.0, 0.25, 0.9})
      EXPECT_EQ(noisy_posterior_class(0.8, e, c - 1), noisy_posterior_uniform(0.8, e, c))
          << "c=" << c << " eps=" << e;
}

TEST(NoisyAccuracy, Examples) {
  EXPECT_NEAR(noisy_accuracy(TheoryParams::uniform(10, 0.9, 0.9)), 0.1, 1e-15);
  EXPECT_NEAR(noisy_accuracy(TheoryParams::uniform(10, 0.9, 0.3)), 0.1, 1e-15);
  EXPECT_EQ(noisy_accuracy(TheoryParams::uniform(7, 0.0, 0.83)), 0.83);
  // (1 - 0.4)^2 * 0.9 + 0.1 * 1.6 = 0.324 + 0.16
  EXPECT_NEAR(noisy_accuracy(TheoryParams::uniform(4, 0.3, 0.9)), 0.484, 1e-15);
}

TEST(NoisyAccuracy, MatchesScoringOracle) {
  for (int s : {1, 2, 5, 9})
    for (double m : {0.6, 0.9, 1.0})
      for (int i = 0; i <= 20; ++i) {
        const double e = i / 20.0;
        EXPECT_NEAR(noisy_accuracy({10, s, e, m, 50.0}), noisy_accuracy_oracle(m, e, s), 1e-14);
      }
}

TEST(NoisyAccuracy, PerfectPosteriorSpecialCase) {
  const int c = 10;
  for (int i = 0; i <= 10; ++i) {
    const double e = i / 10.0, a = c * e / (c - 1);
    EXPECT_NEAR(noisy_accuracy(TheoryParams::uniform(c, e, 1.0)), (1 - a) * (1 - a) + (e / (c - 1)) * (2 - a), 1e-15);
  }
}

TEST(NoisyAccuracy, GridArgminAtTippingPoint) {
  for (int c : {3, 6, 10})
    for (int s = 1; s <= c - 1; ++s)
      for (double m : {0.6, 0.9, 1.0}) {
        int best = 0;
        double lo = 1e9;
        for (int i = 0; i <= 100; ++i) {
          const double v = noisy_accuracy({c, s, i / 100.0, m, 50.0});
          if (v < lo) lo = v, best = i;
        }
        EXPECT_LE(std::abs(best / 100.0 - tipping_point(TippingMode::class_dependent, c, s)), 0.01 + 1e-12)
            << "c=" << c << " s=" << s << " m=" << m;
      }
}

TEST(CleanAccuracy, Examples) {
  EXPECT_NEAR(clean_accuracy(TheoryParams::uniform(10, 0.9, 0.9, 50.0)), 0.45, 1e-12);
  EXPECT_NEAR(clean_accuracy(TheoryParams::uniform(10, 0.0, 0.9, 50.0)), 0.9, 1e-12);
  const double expo = 50.0 * (10.0 / 9.0) * 0.8 * 0.1;
  EXPECT_NEAR(clean_accuracy(TheoryParams::uniform(10, 1.0, 0.9, 50.0)), 0.9 / (1.0 + std::exp(expo)), 1e-15);
  EXPECT_NEAR(clean_accuracy(TheoryParams::uniform(10, 1.0, 0.9, 50.0)), 0.0105, 1e-3);
}

TEST(CleanAccuracy, HalvesAtTippingPoint) {
  for (int s : {1, 2, 5, 9})
    for (double m : {0.6, 0.9, 1.0}) {
      const double e = static_cast<double>(s) / (s + 1);
      EXPECT_NEAR(clean_accuracy({10, s, e, m, 50.0}), m / 2.0, 1e-12);
    }
}

TEST(CleanAccuracy, NonincreasingWhenPosteriorIsConfident) {
  for (int s : {1, 3, 9}) {
    double prev = 2.0;
    for (int i = 0; i <= 100; ++i) {
      const double v = clean_accuracy({10, s, i / 100.0, 0.8, 50.0});
      EXPECT_LE(v, prev);
      prev = v;
    }
  }
}

TEST(CleanAccuracy, HugeLambdaStaysFinite) {
  for (double lam : {50.0, 1e3, 1e6}) {
    const double v = clean_accuracy(TheoryParams::uniform(10, 1.0, 0.9, lam));
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
  }
}

TEST(Theory, ZeroNoiseAgreement) {
  for (double m : {0.6, 0.9, 1.0}) {
    const auto p = TheoryParams::uniform(10, 0.0, m, 1000.0);
    EXPECT_NEAR(noisy_accuracy(p), m, 1e-9);
    EXPECT_NEAR(clean_accuracy(p), m, 1e-9);
  }
}

TEST(Theory, FullSpreadIsBitIdenticalToUniform) {
  for (int i = 0; i <= 10; ++i) {
    const TheoryParams u = TheoryParams::uniform(10, i / 10.0, 0.87, 50.0);
    const TheoryParams s{10, 9, i / 10.0, 0.87, 50.0};
    EXPECT_EQ(noisy_accuracy(u), noisy_accuracy(s));
    EXPECT_EQ(clean_accuracy(u), clean_accuracy(s));
  }
}

TEST(TippingPoint, Values) {
  EXPECT_DOUBLE_EQ(tipping_point(TippingMode::uniform, 10), 0.9);
  EXPECT_DOUBLE_EQ(tipping_point(TippingMode::class_dependent, 10, 1), 0.5);
  for (int c : {2, 5, 10})
    EXPECT_EQ(tipping_point(TippingMode::class_dependent, c, c - 1), tipping_point(TippingMode::uniform, c));
}

TEST(Curve, ElevenRowsWithMinimumAtTipping) {
  std::vector<TheoryParams> grid;
  for (double e : epsilon_grid(0.0, 1.0, 0.1)) grid.push_back(TheoryParams::uniform(10, e, 0.9, 50.0));
  const auto cv = curve(grid);
  ASSERT_EQ(cv.rows.size(), 11u);
  EXPECT_FALSE(cv.outside_validity);
  std::size_t best = 0;
  for (std::size_t i = 0; i < cv.rows.size(); ++i)
    if (cv.rows[i].noisy_acc < cv.rows[best].noisy_acc) best = i;
  EXPECT_DOUBLE_EQ(cv.rows[best].epsilon, 0.9);
  const auto csv = cv.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epsilon,noisy_acc,clean_acc,c,s,m_bar,lambda");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 12);
}

TEST(Curve, FlagsRowsOutsideValidityRegion) {
  EXPECT_TRUE(curve({TheoryParams::uniform(10, 0.5, 0.05)}).outside_validity);
  EXPECT_TRUE(curve({{10, 1, 0.5, 0.5, 50.0}}).outside_validity);
  EXPECT_FALSE(curve({{10, 1, 0.5, 0.51, 50.0}}).outside_validity);
}

TEST(EpsilonGrid, InclusiveEndpointsAndSnapping) {
  const auto g = epsilon_grid(0.0, 1.0, 0.1);
  ASSERT_EQ(g.size(), 11u);
  EXPECT_EQ(g[3], 0.3);
  EXPECT_EQ(g[7], 0.7);
  EXPECT_EQ(g.back(), 1.0);
  EXPECT_EQ(epsilon_grid(0.0, 1.0, 0.01).size(), 101u);
  EXPECT_EQ(parse_epsilon_grid("0:1:0.1"), g);
  EXPECT_EQ(parse_epsilon_grid("0.2:0.2:0.1"), (std::vector<double>{0.2}));
  EXPECT_THROW(parse_epsilon_grid("0:1"), ParameterError);
  EXPECT_THROW(parse_epsilon_grid("a:1:0.1"), ParameterError);
  EXPECT_THROW(parse_epsilon_grid("0:1:0"), ParameterError);
  EXPECT_THROW(parse_epsilon_grid("1:0:0.1"), ParameterError);
}

TEST(TheoryParams, Validation) {
  EXPECT_THROW(noisy_accuracy({1, 1, 0.1, 0.9, 50.0}), ParameterError);
  EXPECT_THROW(noisy_accuracy({4, 4, 0.1, 0.9, 50.0}), ParameterError);
  EXPECT_THROW(noisy_accuracy({4, 1, 1.1, 0.9, 50.0}), ParameterError);
  EXPECT_THROW(clean_accuracy({4, 1, 0.1, 0.9, 0.0}), ParameterError);
  EXPECT_THROW(clean_accuracy({4, 1, 0.1, 1.2, 50.0}), ParameterError);
}
