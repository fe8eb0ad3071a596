#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "epihmc/diagnostics.hpp"
#include "epihmc/synthdata.hpp"

using namespace epihmc;

namespace {

std::vector<double> ar1(std::mt19937_64& rng, double rho, std::size_t n, double mean = 0.0) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> x(n);
  double v = z(rng) / std::sqrt(1.0 - rho * rho);
  for (auto& xi : x) {
    v = rho * v + z(rng);
    xi = mean + v;
  }
  return x;
}

}  // namespace

TEST(GelmanRubin, IdenticalChainsGiveFiniteSampleFactor) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z(0.0, 1.0);
  for (std::size_t n : {10u, 100u, 1000u}) {
    std::vector<double> a(n);
    for (auto& v : a) v = z(rng);
    const auto r = gelman_rubin({a, a, a});
    EXPECT_FALSE(r.degenerate);
    EXPECT_NEAR(r.value, std::sqrt((n - 1.0) / n), 1e-12);
  }
}

TEST(GelmanRubin, HandExample) {
  // means 2.5, 3.5; W = 5/3; B = 4 * 0.5 = 2; V = 3/4 W + B/4 = 1.75
  const auto r = gelman_rubin({{1, 2, 3, 4}, {2, 3, 4, 5}});
  EXPECT_NEAR(r.value, std::sqrt(1.75 / (5.0 / 3.0)), 1e-14);
  EXPECT_NEAR(r.value, std::sqrt(1.05), 1e-14);
}

TEST(GelmanRubin, SeparatedChainsFlagged) {
  std::mt19937_64 rng(2);
  const auto a = ar1(rng, 0.5, 1000, 0.0);
  const auto b = ar1(rng, 0.5, 1000, 10.0);
  EXPECT_GT(gelman_rubin({a, b}).value, 1.1);
  EXPECT_GT(split_gelman_rubin({a, b}).value, 1.1);
}

TEST(GelmanRubin, MixedChainsNearOne) {
  std::mt19937_64 rng(3);
  std::vector<std::vector<double>> chains;
  for (int c = 0; c < 4; ++c) chains.push_back(ar1(rng, 0.3, 2000));
  EXPECT_LT(gelman_rubin(chains).value, 1.01);
  EXPECT_LT(split_gelman_rubin(chains).value, 1.01);
}

TEST(GelmanRubin, SplitCatchesTrend) {
  std::vector<double> a(400), b(400);
  for (std::size_t i = 0; i < 400; ++i) {
    a[i] = static_cast<double>(i) / 40.0 + 0.01 * std::sin(static_cast<double>(i));
    b[i] = a[i] + 0.01 * std::cos(static_cast<double>(i));
  }
  EXPECT_LT(gelman_rubin({a, b}).value, 1.01);
  EXPECT_GT(split_gelman_rubin({a, b}).value, 1.5);
}

TEST(GelmanRubin, ZeroWithinVarianceIsDegenerate) {
  const auto r = gelman_rubin({{1, 1, 1}, {2, 2, 2}});
  EXPECT_TRUE(r.degenerate);
  EXPECT_TRUE(std::isnan(r.value) || std::isinf(r.value));
}

TEST(GelmanRubin, AffineInvariant) {
  std::mt19937_64 rng(4);
  const auto a = ar1(rng, 0.7, 300);
  const auto b = ar1(rng, 0.7, 300, 0.4);
  auto ta = a, tb = b;
  for (auto& v : ta) v = -3.0 * v + 100.0;
  for (auto& v : tb) v = -3.0 * v + 100.0;
  EXPECT_NEAR(gelman_rubin({a, b}).value, gelman_rubin({ta, tb}).value, 1e-10);
  EXPECT_NEAR(split_gelman_rubin({a, b}).value, split_gelman_rubin({ta, tb}).value, 1e-10);
}

TEST(GelmanRubin, RejectsTooFewChainsOrDraws) {
  EXPECT_THROW(gelman_rubin({{1, 2, 3}}), InvalidArgument);
  EXPECT_THROW(gelman_rubin({{1}, {2}}), InvalidArgument);
  EXPECT_THROW(gelman_rubin({{1, 2, 3}, {1, 2}}), InvalidArgument);
}

TEST(EffectiveSampleSize, IndependentDraws) {
  std::mt19937_64 rng(5);
  std::vector<std::vector<double>> chains;
  for (int c = 0; c < 4; ++c) chains.push_back(ar1(rng, 0.0, 2500));
  const double ess = effective_sample_size(chains);
  EXPECT_GT(ess, 0.85 * 10000);
  EXPECT_LT(ess, 1.15 * 10000);
}

TEST(EffectiveSampleSize, AutoregressiveDraws) {
  // AR(1) integrated autocorrelation time (1 + rho) / (1 - rho)
  const double rho = 0.9;
  std::mt19937_64 rng(6);
  std::vector<std::vector<double>> chains;
  for (int c = 0; c < 4; ++c) chains.push_back(ar1(rng, rho, 20000));
  const double expected = 80000 * (1 - rho) / (1 + rho);
  EXPECT_NEAR(effective_sample_size(chains), expected, 0.15 * expected);
}

TEST(EffectiveSampleSize, DegenerateInputs) {
  EXPECT_EQ(effective_sample_size({{1, 1, 1, 1, 1}, {1, 1, 1, 1, 1}}), 0.0);
  EXPECT_EQ(effective_sample_size({{1, 2}}), 0.0);
}

TEST(Quantile, TypeSevenInterpolation) {
  const std::vector<double> x{5, 1, 4, 2, 3};
  EXPECT_DOUBLE_EQ(quantile(x, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile(x, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(quantile(x, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(quantile(x, 0.1), 1.4);
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({7}, 0.3), 7.0);
  EXPECT_THROW(quantile({}, 0.5), InvalidArgument);
  EXPECT_THROW(quantile({1, 2}, 1.5), InvalidArgument);
}

TEST(Correlation, KnownValues) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> y{2, 4, 6, 8, 10};
  const std::vector<double> z{5, 3, 4, 1, 2};
  EXPECT_NEAR(pearson_correlation(x, y), 1.0, 1e-15);
  EXPECT_NEAR(pearson_correlation(x, z), -0.8, 1e-15);
}

TEST(BetaR0Summary, ConstantDrawsAndPerDrawRatio) {
  const ModelSpec spec = synthetic_model();
  ParamVector a = synthetic_parameters();
  std::fill(a.beta.begin(), a.beta.end(), std::log(0.3));
  a.gamma = 0.1;
  ParamVector b = a;
  std::fill(b.beta.begin(), b.beta.end(), std::log(0.6));
  b.gamma = 0.2;
  const std::vector<ParamVector> draws{a, b};
  const auto s = summarize_beta_r0(spec, draws);
  ASSERT_EQ(s.beta.size(), 101u);
  for (std::size_t j = 0; j < s.beta.size(); ++j) {
    EXPECT_NEAR(s.beta.median[j], 0.45, 1e-12);
    // both draws have R0 = 3; a ratio of medians would give 0.45 / 0.15
    EXPECT_NEAR(s.r0.median[j], 3.0, 1e-12);
    EXPECT_NEAR(s.r0.lower[j], 3.0, 1e-12);
    EXPECT_NEAR(s.beta.lower[j], 0.3 + 0.025 * 0.3, 1e-12);
  }
  EXPECT_THROW(summarize_beta_r0(spec, std::span<const ParamVector>{}), InvalidArgument);
}

TEST(PosteriorPredictive, ScalesByUnderReporting) {
  const ModelSpec spec = synthetic_model();
  const auto data = generate_dataset(SyntheticRecipe{}).series;
  ParamVector p = synthetic_parameters();
  p.phi_inv = 1e-9;  // effectively Poisson
  const std::vector<ParamVector> draws(4000, p);
  const Tolerances tol = Tolerances::for_population(spec.N);
  const auto full = posterior_predictive(spec, draws, data, 1, tol);

  IncidenceSeries halved = data;
  halved.eta = UnderReporting{{{0.0, 0.5}}};
  const auto half = posterior_predictive(spec, draws, halved, 1, tol);

  const CompartmentalModel model(spec);
  const auto inc = daily_incidence(model, model.integrate(p, tol));
  EXPECT_EQ(full.failures, 0);
  for (std::size_t j = 0; j < inc.values.size(); ++j) {
    const double mu = inc.values[j];
    // Poisson median within one unit of the mean; 95% band about mu +- 1.96 sqrt(mu)
    EXPECT_NEAR(full.counts.median[j], mu, 1.0 + 0.05 * std::sqrt(mu)) << "day " << j + 1;
    if (mu > 50) {
      EXPECT_NEAR(full.counts.upper[j] - full.counts.lower[j], 2 * 1.96 * std::sqrt(mu), 0.15 * std::sqrt(mu) + 2);
    }
    // same RNG stream: the thinned series is exactly half
    EXPECT_DOUBLE_EQ(half.counts.median[j], 0.5 * full.counts.median[j]);
  }
}

TEST(PosteriorPredictive, CountsFailedDraws) {
  const ModelSpec spec = synthetic_model();
  const auto data = generate_dataset(SyntheticRecipe{}).series;
  ParamVector bad = synthetic_parameters();
  std::fill(bad.beta.begin(), bad.beta.end(), 1000.0);
  const std::vector<ParamVector> draws{synthetic_parameters(), bad};
  const auto out = posterior_predictive(spec, draws, data, 3, Tolerances::for_population(spec.N));
  EXPECT_EQ(out.failures, 1);
  EXPECT_EQ(out.counts.size(), 100u);
}

TEST(BandCoverage, CountsInclusiveBounds) {
  SummaryTable band{{1, 2, 3, 4}, {0, 5, 5, 5}, {1, 6, 6, 6}, {2, 7, 7, 7}};
  const std::vector<std::int64_t> y{2, 4, 5, 8};
  EXPECT_DOUBLE_EQ(band_coverage(band, y), 0.5);
  EXPECT_THROW(band_coverage(band, std::vector<std::int64_t>{1}), InvalidArgument);
}
