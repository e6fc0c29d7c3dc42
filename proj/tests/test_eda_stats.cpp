#include "foodprice/eda_stats.hpp"
#include "foodprice/random.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace foodprice;

namespace {

std::vector<double> normal_sample(std::size_t n, std::uint64_t seed, double mu = 0.0, double sd = 1.0) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = mu + sd * rng.normal();
  return v;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an exception";
  return ErrorCode::io;
}

}  // namespace

TEST(Describe, ConstantSeries) {
  const std::vector<double> v{7, 7, 7, 7};
  const auto s = describe(v);
  EXPECT_EQ(s.mean, 7.0);
  EXPECT_EQ(s.median, 7.0);
  EXPECT_EQ(s.std_dev, 0.0);
  EXPECT_EQ(s.iqr, 0.0);
  EXPECT_EQ(s.ci_low, 7.0);
  EXPECT_EQ(s.ci_high, 7.0);
}

TEST(Describe, OneToFive) {
  const std::vector<double> v{5, 3, 1, 4, 2};
  const auto s = describe(v, 0.95);
  EXPECT_EQ(s.n, 5);
  EXPECT_DOUBLE_EQ(s.mean, 3.0);
  EXPECT_DOUBLE_EQ(s.median, 3.0);
  EXPECT_NEAR(s.std_dev, std::sqrt(2.5), 1e-15);
  EXPECT_DOUBLE_EQ(s.iqr, 2.0);
  const double half = 2.7764451051977987 * std::sqrt(2.5) / std::sqrt(5.0);
  EXPECT_NEAR(s.ci_high, 3.0 + half, 1e-9);
  EXPECT_NEAR(s.ci_low, 3.0 - half, 1e-9);
  EXPECT_NEAR(s.ci_high, 4.9632431614775605, 1e-9);
}

TEST(Describe, QuantileInterpolation) {
  const std::vector<double> v{1, 2, 3, 4};
  const auto s = describe(v);
  EXPECT_DOUBLE_EQ(s.median, 2.5);
  EXPECT_DOUBLE_EQ(s.iqr, 3.25 - 1.75);
}

TEST(Describe, TooFew) {
  EXPECT_EQ(code_of([] { describe(std::vector<double>{1.0}); }), ErrorCode::too_few_samples);
}

TEST(Describe, CiBracketsMean) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = describe(normal_sample(10 + seed, seed, 5.0, 3.0), 0.9);
    EXPECT_LE(s.ci_low, s.mean);
    EXPECT_GE(s.ci_high, s.mean);
    EXPECT_GE(s.iqr, 0.0);
  }
}

TEST(AndersonDarling, MatchesDirectFormula) {
  const auto x = normal_sample(100, 2024);
  const auto r = anderson_darling(x);
  EXPECT_NEAR(r.a_squared, oracle::ad_statistic(x), 1e-10);
  EXPECT_DOUBLE_EQ(r.a_star, r.a_squared * (1 + 0.75 / 100 + 2.25 / 10000));
  EXPECT_GE(r.p_value, 0.0);
  EXPECT_LE(r.p_value, 1.0);
}

TEST(AndersonDarling, UniformGridRejected) {
  std::vector<double> x(100);
  std::iota(x.begin(), x.end(), 0.0);
  const auto r = anderson_darling(x);
  EXPECT_LT(r.p_value, 0.05);
  EXPECT_FALSE(r.passed);
}

TEST(AndersonDarling, Errors) {
  EXPECT_EQ(code_of([] { anderson_darling(std::vector<double>(10, 3.0)); }), ErrorCode::zero_variance);
  EXPECT_EQ(code_of([] { anderson_darling(std::vector<double>{1, 2, 3, 4, 5, 6, 7}); }), ErrorCode::too_few_samples);
}

TEST(AndersonDarling, AffineInvariance) {
  const auto x = normal_sample(40, 77);
  const double base = anderson_darling(x).a_squared;
  for (auto [a, b] : std::vector<std::pair<double, double>>{{2.0, 0.0}, {0.001, 5.0}, {1000.0, -3.0}}) {
    std::vector<double> y(x.size());
    std::transform(x.begin(), x.end(), y.begin(), [&](double v) { return a * v + b; });
    EXPECT_NEAR(anderson_darling(y).a_squared, base, 1e-10);
  }
}

TEST(AndersonDarling, PValueDecreasingWithinEachPiece) {
  // The approximation is continuous only piecewise; at A* = 0.6 the two
  // branches disagree by about 0.0025, so monotonicity is asserted per piece.
  const std::vector<std::pair<double, double>> pieces{{0.0, 0.2}, {0.2 + 1e-9, 0.34}, {0.34 + 1e-9, 0.6 - 1e-9}, {0.6, 150.0}};
  for (auto [lo, hi] : pieces) {
    double prev = ad_p_value(lo);
    const int steps = 4000;
    for (int k = 1; k <= steps; ++k) {
      const double a = lo + (hi - lo) * k / steps;
      const double p = ad_p_value(a);
      if (prev > 0.0) EXPECT_LT(p, prev) << "A* = " << a;
      prev = p;
    }
  }
  EXPECT_GT(ad_p_value(0.6), ad_p_value(0.6 - 1e-9));  // the known jump
}

TEST(AndersonDarling, PValueStaysInUnitInterval) {
  for (double a = 0.0; a < 400.0; a += 0.05) {
    const double p = ad_p_value(a);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(YeoJohnson, LambdaOneIsIdentity) {
  const std::vector<double> x{-3.5, -1, 0, 0.25, 2, 1e6};
  EXPECT_EQ(yeo_johnson_apply(x, 1.0), x);
  for (double v : x) EXPECT_NEAR(yeo_johnson_value(v, 1.0), v, 1e-9 * std::max(1.0, std::fabs(v)));
}

TEST(YeoJohnson, KnownValues) {
  EXPECT_NEAR(yeo_johnson_value(3.0, 0.0), std::log(4.0), 1e-15);
  EXPECT_NEAR(yeo_johnson_value(-3.0, 2.0), -std::log(4.0), 1e-15);
  EXPECT_NEAR(yeo_johnson_value(3.0, 0.5), (2.0 - 1.0) / 0.5, 1e-15);
  EXPECT_NEAR(yeo_johnson_value(-3.0, 0.5), -(std::pow(4.0, 1.5) - 1.0) / 1.5, 1e-15);
}

TEST(YeoJohnson, NormalSampleKeepsLambdaNearOne) {
  // Centred at zero so lambda is well identified; a narrow sample far from
  // zero leaves the likelihood nearly flat in lambda.
  const auto x = normal_sample(500, 31);
  const auto fit = yeo_johnson(x);
  EXPECT_GE(fit.lambda, 0.7);
  EXPECT_LE(fit.lambda, 1.3);
  EXPECT_TRUE(anderson_darling(fit.transformed).passed);
}

TEST(YeoJohnson, LogNormalPullsLambdaDown) {
  auto x = normal_sample(100, 5);
  for (auto& v : x) v = std::exp(v);
  const auto before = anderson_darling(x);
  const auto fit = yeo_johnson(x);
  EXPECT_LE(fit.lambda, 0.3);
  EXPECT_GT(anderson_darling(fit.transformed).p_value, before.p_value);
}

TEST(YeoJohnson, PicksGridMaximum) {
  auto x = normal_sample(60, 8);
  for (auto& v : x) v = v * v * v;
  const auto fit = yeo_johnson(x);
  const double best = yeo_johnson_log_likelihood(x, fit.lambda);
  for (int k = -20; k <= 20; ++k) EXPECT_LE(yeo_johnson_log_likelihood(x, k / 10.0), best);
  EXPECT_NEAR(fit.lambda * 10.0, std::round(fit.lambda * 10.0), 1e-12);
}

TEST(ScreenFeature, TransformOnlyWhenItHelps) {
  const auto normal = normal_sample(50, 3);
  EXPECT_FALSE(screen_feature(normal, "n").result.transform_lambda.has_value());

  auto skewed = normal_sample(50, 4);
  for (auto& v : skewed) v = std::exp(1.5 * v);
  const auto s = screen_feature(skewed, "s");
  ASSERT_FALSE(s.result.passed);
  ASSERT_TRUE(s.result.transform_lambda.has_value());
  EXPECT_GT(anderson_darling(s.values).p_value, s.result.p_value);
}

TEST(Kde, IntegratesToOne) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    auto x = normal_sample(5 + 7 * seed, seed);
    if (seed % 3 == 0)
      for (auto& v : x) v = std::exp(v);
    const auto c = kde(x, 256);
    const double area = trapezoid(c.grid, c.density);
    EXPECT_GE(area, 0.99);
    EXPECT_LE(area, 1.01);
    EXPECT_GE(c.density.minCoeff(), 0.0);
  }
}

TEST(Kde, PeakNearMean) {
  const auto x = normal_sample(100, 12);
  const auto c = kde(x, 16);
  Index k = 0;
  c.density.maxCoeff(&k);
  const double step = c.grid[1] - c.grid[0];
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  EXPECT_LE(std::fabs(c.grid[k] - mean), step);
}

TEST(Kde, MirrorSymmetry) {
  const auto x = normal_sample(30, 21);
  std::vector<double> neg(x.size());
  std::transform(x.begin(), x.end(), neg.begin(), [](double v) { return -v; });
  const auto a = kde(x, 64);
  const auto b = kde(neg, 64);
  for (Index k = 0; k < 64; ++k) {
    EXPECT_NEAR(a.grid[k], -b.grid[63 - k], 1e-12);
    EXPECT_NEAR(a.density[k], b.density[63 - k], 1e-12);
  }
}

TEST(Kde, BandwidthAndErrors) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const double iqr = 2.0;
  EXPECT_NEAR(silverman_bandwidth(x), 0.9 * std::min(std::sqrt(2.5), iqr / 1.34) * std::pow(5.0, -0.2), 1e-15);
  EXPECT_EQ(code_of([] { kde(std::vector<double>{2, 2, 2}); }), ErrorCode::zero_variance);
  EXPECT_EQ(code_of([&] { kde(x, 8); }), ErrorCode::invalid_argument);
}

TEST(Pearson, Basics) {
  const std::vector<double> x{1, 4, 2, 8, 5};
  std::vector<double> neg(x.size());
  std::transform(x.begin(), x.end(), neg.begin(), [](double v) { return -v; });
  EXPECT_DOUBLE_EQ(pearson(x, x), 1.0);
  EXPECT_DOUBLE_EQ(pearson(x, neg), -1.0);
  EXPECT_NEAR(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 7}), 0.9933992677987828, 1e-14);
}

TEST(Pearson, Errors) {
  EXPECT_EQ(code_of([] { pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}); }), ErrorCode::zero_variance);
  EXPECT_EQ(code_of([] { pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}); }), ErrorCode::shape);
}

TEST(FScore, ZeroCorrelation) {
  const auto s = f_score(std::vector<double>{1, 2, 3, 4, 5}, std::vector<double>{1, -1, 0, -1, 1}, "x");
  EXPECT_EQ(s.r, 0.0);
  EXPECT_EQ(s.f_value, 0.0);
  EXPECT_EQ(s.p_value, 1.0);
}

TEST(FScore, PerfectPredictor) {
  const std::vector<double> x{1, 3, 2, 5};
  std::vector<double> y(x.size());
  std::transform(x.begin(), x.end(), y.begin(), [](double v) { return 2 * v; });
  const auto s = f_score(x, y);
  EXPECT_TRUE(std::isinf(s.f_value));
  EXPECT_EQ(s.p_value, 0.0);
}

TEST(FScore, PlantedHalfCorrelation) {
  // Build n = 20 vectors with r = 0.5 exactly (up to rounding): y = 0.5 u + sqrt(0.75) v
  // with u, v orthonormal and centred.
  const int n = 20;
  Vector u(n), v(n);
  for (int i = 0; i < n; ++i) {
    u[i] = i - 9.5;
    v[i] = (i % 2 == 0 ? 1.0 : -1.0);
  }
  v -= (v.dot(u) / u.dot(u)) * u;
  v.array() -= v.mean();
  u /= u.norm();
  v /= v.norm();
  const Vector y = 0.5 * u + std::sqrt(0.75) * v;
  const auto s = f_score(u, y);
  EXPECT_NEAR(s.r, 0.5, 1e-12);
  EXPECT_NEAR(s.f_value, 6.0, 1e-10);
  EXPECT_NEAR(s.p_value, oracle::f_upper_tail(6.0, 1.0, 18.0), 1e-6);
}

TEST(FScore, RankingMatchesAbsR) {
  Rng rng(19);
  const int n = 15;
  Vector y(n);
  for (int i = 0; i < n; ++i) y[i] = rng.normal();
  std::vector<FeatureScore> scores;
  for (int f = 0; f < 30; ++f) {
    Vector x(n);
    const double w = rng.uniform() * 2 - 1;
    for (int i = 0; i < n; ++i) x[i] = w * y[i] + rng.normal();
    scores.push_back(f_score(x, y));
  }
  auto by_f = scores, by_r = scores;
  std::sort(by_f.begin(), by_f.end(), [](auto& a, auto& b) { return a.f_value > b.f_value; });
  std::sort(by_r.begin(), by_r.end(), [](auto& a, auto& b) { return std::fabs(a.r) > std::fabs(b.r); });
  for (std::size_t i = 0; i < scores.size(); ++i) EXPECT_EQ(by_f[i].r, by_r[i].r);
}

TEST(FScore, ConstantFeatureNamed) {
  try {
    f_score(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}, "flat");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::zero_variance);
    EXPECT_NE(std::string(e.what()).find("flat"), std::string::npos);
  }
}
