#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "epihmc/gradient_check.hpp"
#include "epihmc/posterior.hpp"
#include "epihmc/synthdata.hpp"

using namespace epihmc;

namespace {

// Negative Binomial pmf for integer k as (k+phi-1 choose k) p^phi (1-p)^k.
double nb_pmf_binomial_form(int k, double mean, double phi) {
  const double p = phi / (mean + phi);
  double coeff = 1.0;
  for (int i = 1; i <= k; ++i) coeff *= (phi + i - 1) / i;
  return coeff * std::pow(p, phi) * std::pow(1.0 - p, k);
}

double integrate(const std::function<double(double)>& f, double a, double b, int n = 200000) {
  const double h = (b - a) / n;
  double s = 0.5 * (f(a) + f(b));
  for (int i = 1; i < n; ++i) s += f(a + i * h);
  return s * h;
}

IncidenceSeries benchmark_data() { return generate_dataset(SyntheticRecipe{}).series; }

}  // namespace

TEST(NegativeBinomial, MatchesBinomialForm) {
  for (double mean : {0.5, 3.0, 40.0}) {
    for (double phi : {0.7, 2.0, 10.0}) {
      for (int k : {0, 1, 2, 5, 17}) {
        EXPECT_NEAR(std::exp(neg_binom_logpmf(k, mean, phi)), nb_pmf_binomial_form(k, mean, phi), 1e-12);
      }
    }
  }
}

TEST(NegativeBinomial, SumsToOneWithRightMoments) {
  for (double mean : {0.3, 5.0, 120.0}) {
    for (double phi : {0.5, 10.0, 1e3}) {
      double total = 0.0, m1 = 0.0, m2 = 0.0;
      for (int k = 0; k < 20000; ++k) {
        const double p = std::exp(neg_binom_logpmf(k, mean, phi));
        total += p;
        m1 += k * p;
        m2 += static_cast<double>(k) * k * p;
      }
      EXPECT_NEAR(total, 1.0, 1e-9);
      EXPECT_NEAR(m1, mean, 1e-6 * (1 + mean));
      EXPECT_NEAR(m2 - m1 * m1, mean + mean * mean / phi, 1e-5 * (1 + mean * mean));
    }
  }
}

TEST(NegativeBinomial, LargeDispersionApproachesPoisson) {
  const double mean = 7.5;
  for (int k : {0, 3, 7, 15}) {
    const double poisson = k * std::log(mean) - mean - std::lgamma(k + 1.0);
    EXPECT_NEAR(neg_binom_logpmf(k, mean, 1e9), poisson, 1e-7);
  }
}

TEST(NegativeBinomial, AccurateForLargeDispersion) {
  const auto reference = [](long double k, long double mean, long double phi) {
    return std::lgamma(k + phi) - std::lgamma(phi) - std::lgamma(k + 1.0L) - phi * std::log1p(mean / phi) +
           k * (std::log(mean) - std::log(mean + phi));
  };
  for (double phi : {9999.0, 1e4, 1e5, 1e7}) {
    for (double k : {0.0, 4.0, 37.5, 900.0}) {
      const double ref = static_cast<double>(reference(k, 20.0L, phi));
      EXPECT_NEAR(neg_binom_logpmf(k, 20.0, phi), ref, 1e-9 * (1.0 + std::abs(ref))) << "phi " << phi << " k " << k;
    }
  }
}

TEST(NegativeBinomial, DerivativesMatchFiniteDifferences) {
  for (double k : {0.0, 3.0, 12.4, 250.0}) {
    for (double mean : {0.2, 8.0, 300.0}) {
      for (double phi : {0.5, 10.0, 200.0}) {
        const double hm = 1e-6 * mean;
        const double fd_m = (neg_binom_logpmf(k, mean + hm, phi) - neg_binom_logpmf(k, mean - hm, phi)) / (2 * hm);
        EXPECT_NEAR(neg_binom_dlogpmf_dmean(k, mean, phi), fd_m, 1e-6 * (1 + std::abs(fd_m)));
        const double hp = 1e-6 * phi;
        const double fd_p = (neg_binom_logpmf(k, mean, phi + hp) - neg_binom_logpmf(k, mean, phi - hp)) / (2 * hp);
        EXPECT_NEAR(neg_binom_dlogpmf_dphi(k, mean, phi), fd_p, 1e-5 * (1 + std::abs(fd_p)));
      }
    }
  }
}

TEST(NegativeBinomial, RejectsInvalidArguments) {
  EXPECT_THROW(neg_binom_logpmf(1, 0.0, 1.0), InvalidArgument);
  EXPECT_THROW(neg_binom_logpmf(1, 1.0, 0.0), InvalidArgument);
  EXPECT_THROW(neg_binom_logpmf(-1, 1.0, 1.0), InvalidArgument);
}

TEST(NegativeBinomial, SamplerMoments) {
  std::mt19937_64 rng(5);
  const double mean = 40.0, phi = 10.0;
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto x = static_cast<double>(sample_neg_binom(rng, mean, phi));
    s += x;
    s2 += x * x;
  }
  const double m = s / n;
  const double var = s2 / n - m * m;
  const double true_var = mean + mean * mean / phi;
  EXPECT_NEAR(m, mean, 4 * std::sqrt(true_var / n));
  EXPECT_NEAR(var, true_var, 0.03 * true_var);
}

TEST(UnderReporting, PiecewiseLinear) {
  const UnderReporting eta{{{92.0, 0.15}, {231.0, 0.54}}};
  EXPECT_DOUBLE_EQ(eval_eta(eta, 0.0), 0.15);
  EXPECT_DOUBLE_EQ(eval_eta(eta, 92.0), 0.15);
  EXPECT_NEAR(eval_eta(eta, 161.5), 0.345, 1e-15);
  EXPECT_DOUBLE_EQ(eval_eta(eta, 231.0), 0.54);
  EXPECT_DOUBLE_EQ(eval_eta(eta, 400.0), 0.54);
  EXPECT_DOUBLE_EQ(eval_eta(UnderReporting{}, 12.0), 1.0);
  EXPECT_THROW((UnderReporting{{{10.0, 0.5}, {5.0, 0.6}}}.validate()), InvalidArgument);
  EXPECT_THROW((UnderReporting{{{10.0, 1.5}}}.validate()), InvalidArgument);
}

TEST(Priors, DensitiesMatchClosedForms) {
  const double x = 0.37;
  EXPECT_NEAR(evaluate_prior(NormalPrior{0.5, 0.05}, x).log_density,
              std::log(std::exp(-0.5 * std::pow((x - 0.5) / 0.05, 2)) / (0.05 * std::sqrt(2 * std::numbers::pi))),
              1e-12);
  EXPECT_NEAR(evaluate_prior(ExponentialPrior{10.0}, x).log_density, std::log(10.0 * std::exp(-10.0 * x)), 1e-12);
  EXPECT_NEAR(evaluate_prior(UniformPrior{0.095, 0.105}, 0.1).log_density, std::log(100.0), 1e-12);
  // InverseGamma(1, 0.005): b / x^2 exp(-b/x)
  EXPECT_NEAR(evaluate_prior(InverseGammaPrior{1.0, 0.005}, x).log_density,
              std::log(0.005 / (x * x) * std::exp(-0.005 / x)), 1e-12);
  EXPECT_FALSE(evaluate_prior(UniformPrior{0.095, 0.105}, 0.2).in_support);
  EXPECT_FALSE(evaluate_prior(ExponentialPrior{1.0}, -0.1).in_support);
  EXPECT_FALSE(evaluate_prior(InverseGammaPrior{1.0, 1.0}, 0.0).in_support);
  EXPECT_FALSE(evaluate_prior(TruncatedNormalPrior{0.1, 0.015, 1.0 / 30, 1.0}, 0.01).in_support);
}

TEST(Priors, NormalizeToOne) {
  const std::vector<std::pair<Prior, std::pair<double, double>>> cases{
      {NormalPrior{0.5, 0.05}, {0.0, 1.0}},
      {TruncatedNormalPrior{0.1, 0.015, 1.0 / 30, 1.0}, {1.0 / 30, 1.0}},
      {TruncatedNormalPrior{0.0, 1.0, 0.5, 2.0}, {0.5, 2.0}},
      {UniformPrior{0.095, 0.105}, {0.095, 0.105}},
      {ExponentialPrior{10.0}, {0.0, 10.0}},
      {InverseGammaPrior{3.0, 2.0}, {1e-6, 400.0}},
  };
  for (const auto& [prior, range] : cases) {
    const double mass = integrate([&](double x) { return std::exp(evaluate_prior(prior, x).log_density); },
                                  range.first, range.second, 400000);
    EXPECT_NEAR(mass, 1.0, 2e-4) << describe_prior(prior);
  }
}

TEST(Priors, DerivativesMatchFiniteDifferences) {
  const std::vector<std::pair<Prior, double>> cases{{NormalPrior{0.5, 0.05}, 0.47},
                                                    {TruncatedNormalPrior{0.1, 0.015, 1.0 / 30, 1.0}, 0.12},
                                                    {UniformPrior{0.0, 1.0}, 0.3},
                                                    {ExponentialPrior{10.0}, 0.2},
                                                    {InverseGammaPrior{1.0, 0.005}, 0.04}};
  for (const auto& [prior, x] : cases) {
    const double h = 1e-6 * x;
    const double fd = (evaluate_prior(prior, x + h).log_density - evaluate_prior(prior, x - h).log_density) / (2 * h);
    EXPECT_NEAR(evaluate_prior(prior, x).derivative, fd, 1e-5 * (1 + std::abs(fd))) << describe_prior(prior);
  }
}

TEST(Priors, SamplesRespectSupport) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 2000; ++i) {
    const double t = sample_prior(TruncatedNormalPrior{0.1, 0.015, 1.0 / 30, 1.0}, rng);
    EXPECT_GE(t, 1.0 / 30);
    EXPECT_LE(t, 1.0);
    EXPECT_GT(sample_prior(NormalPrior{0.1, 1.0}, rng, true), 0.0);
    EXPECT_GT(sample_prior(InverseGammaPrior{1.0, 0.005}, rng), 0.0);
  }
}

TEST(Priors, InvalidParametersRejected) {
  EXPECT_THROW(validate_prior(NormalPrior{0.0, 0.0}), InvalidArgument);
  EXPECT_THROW(validate_prior(UniformPrior{1.0, 1.0}), InvalidArgument);
  EXPECT_THROW(validate_prior(ExponentialPrior{-1.0}), InvalidArgument);
  EXPECT_THROW(validate_prior(InverseGammaPrior{1.0, 0.0}), InvalidArgument);
}

TEST(LogPrior, PsplineTermAndGradient) {
  const ModelSpec spec = synthetic_model();
  const PenaltyMatrix k = penalty_matrix(spec.basis_size(), 2);
  for (auto target : {TauPriorTarget::kTauSquared, TauPriorTarget::kTau}) {
    PriorConfig pc;
    pc.tau_target = target;
    ParamVector p = synthetic_parameters();
    p.tau = 0.7;
    const auto value = log_prior(spec, p, pc, k);
    ASSERT_TRUE(value.in_support);

    // Independent evaluation of the random-walk term.
    const double quad = k.quadratic_form(p.beta);
    const double rw = -quad / (2 * 0.49) - 0.5 * (12 - 2) * std::log(0.49);
    double scalar = evaluate_prior(pc.alpha, p.alpha).log_density + evaluate_prior(pc.gamma, p.gamma).log_density +
                    evaluate_prior(pc.seed0, p.seed0).log_density + evaluate_prior(pc.phi_inv, p.phi_inv).log_density;
    scalar += target == TauPriorTarget::kTau ? evaluate_prior(pc.tau, 0.7).log_density
                                             : evaluate_prior(pc.tau, 0.49).log_density + std::log(1.4);
    EXPECT_NEAR(value.value, scalar + rw, 1e-10);

    const auto flat = flatten(spec, p);
    for (std::size_t i = 0; i < flat.size(); ++i) {
      if (i == 1) continue;  // gamma sits in a uniform prior: derivative zero
      const double h = 1e-6 * std::max(1.0, std::abs(flat[i]));
      auto up = flat, dn = flat;
      up[i] += h;
      dn[i] -= h;
      const double fd =
          (log_prior(spec, unflatten(spec, up), pc, k).value - log_prior(spec, unflatten(spec, dn), pc, k).value) /
          (2 * h);
      EXPECT_NEAR(value.gradient[i], fd, 1e-5 * (1 + std::abs(fd))) << "component " << i;
    }
  }
}

TEST(LogPrior, OutOfSupport) {
  const ModelSpec spec = synthetic_model();
  ParamVector p = synthetic_parameters();
  p.gamma = 0.2;
  const auto v = log_prior(spec, p, PriorConfig{}, penalty_matrix(12, 2));
  EXPECT_FALSE(v.in_support);
  EXPECT_TRUE(std::isinf(v.value));
}

TEST(Posterior, GradientMatchesFiniteDifferences) {
  const auto data = benchmark_data();
  std::mt19937_64 rng(17);
  for (auto [family, k] : {std::pair{ModelFamily::SEMIKR, 3}, std::pair{ModelFamily::SIKR, 1}}) {
    ModelSpec spec = synthetic_model();
    spec.family = family;
    spec.K = k;
    PosteriorOptions opts;
    opts.rtol = 1e-12;
    opts.atol_scale = 1e-12;
    const Posterior post(spec, data, PriorConfig{}, opts);
    for (int i = 0; i < 3; ++i) {
      const auto cmp = compare_gradient(post, random_feasible_point(spec, PriorConfig{}, rng));
      ASSERT_TRUE(cmp.evaluated) << cmp.message;
      EXPECT_LE(cmp.max_error, 1e-4) << spec.name() << " worst component " << cmp.worst;
    }
  }
}

TEST(Posterior, LikelihoodUsesUnderReporting) {
  auto data = benchmark_data();
  const ModelSpec spec = synthetic_model();
  const ParamVector p = synthetic_parameters();
  const Posterior plain(spec, data, PriorConfig{});
  data.eta = UnderReporting{{{0.0, 0.5}}};
  const Posterior halved(spec, data, PriorConfig{});
  // Manual evaluation with k = count / 0.5.
  const CompartmentalModel model(spec);
  const auto inc = daily_incidence(model, model.integrate(p, plain.tolerances()));
  double expected = 0.0;
  for (std::size_t j = 0; j < data.counts.size(); ++j) {
    expected += neg_binom_logpmf(data.counts[j] / 0.5, std::max(inc.values[j], 1e-8), p.phi());
  }
  EXPECT_NEAR(halved.evaluate(p, false).log_likelihood, expected, 1e-6);
  EXPECT_NE(plain.evaluate(p, false).log_likelihood, halved.evaluate(p, false).log_likelihood);
}

TEST(Posterior, StatusForBadPoints) {
  const Posterior post(synthetic_model(), benchmark_data(), PriorConfig{});
  ParamVector p = synthetic_parameters();
  p.gamma = 0.5;  // outside the uniform prior
  EXPECT_EQ(post.evaluate(p).status, EvalStatus::kOutOfSupport);
  p = synthetic_parameters();
  p.phi_inv = -1.0;
  EXPECT_EQ(post.evaluate(p).status, EvalStatus::kOutOfSupport);
  p = synthetic_parameters();
  p.beta[4] = 5000.0;
  const auto v = post.evaluate(p);
  EXPECT_EQ(v.status, EvalStatus::kIntegrationFailed);
  EXPECT_TRUE(v.gradient.empty());
}

TEST(Posterior, DataLengthMustMatchHorizon) {
  auto data = benchmark_data();
  data.counts.pop_back();
  EXPECT_THROW(Posterior(synthetic_model(), data, PriorConfig{}), InvalidArgument);
}

TEST(UnconstrainedPosterior, TransformsRoundTrip) {
  const Posterior post(synthetic_model(), benchmark_data(), PriorConfig::regional_study());
  const UnconstrainedPosterior target(post);
  const ParamVector p = synthetic_parameters();
  const auto theta = target.to_unconstrained(p);
  const ParamVector back = target.to_natural(theta);
  const auto a = flatten(post.spec(), p);
  const auto b = flatten(post.spec(), back);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12 * (1 + std::abs(a[i])));
  EXPECT_EQ(target.transforms()[1].kind, Transform::Kind::kLogit);  // truncated gamma
  EXPECT_EQ(target.transforms()[0].kind, Transform::Kind::kLog);
  EXPECT_EQ(target.transforms()[6].kind, Transform::Kind::kIdentity);
}

TEST(UnconstrainedPosterior, GradientMatchesFiniteDifferences) {
  PosteriorOptions opts;
  opts.rtol = 1e-12;
  opts.atol_scale = 1e-12;
  const Posterior post(synthetic_model(), benchmark_data(), PriorConfig{}, opts);
  const UnconstrainedPosterior target(post);
  const auto theta = target.to_unconstrained(synthetic_parameters());
  std::vector<double> grad(theta.size());
  const auto value = target(theta, grad);
  ASSERT_TRUE(value.has_value());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double h = 1e-5;
    auto up = theta, dn = theta;
    up[i] += h;
    dn[i] -= h;
    const double fd = (*target(up, {}) - *target(dn, {})) / (2 * h);
    EXPECT_NEAR(grad[i], fd, 1e-4 * std::max(1.0, std::abs(fd))) << "component " << i;
  }
}

TEST(UnconstrainedPosterior, LogitJacobian) {
  const Transform t{Transform::Kind::kLogit, 0.095, 0.105};
  for (double theta : {-30.0, -2.0, 0.0, 1.5, 25.0}) {
    const double h = 1e-6;
    // (u - l) s (1 - s) for the logistic s, written without cancellation
    const double e = std::exp(-std::abs(theta));
    const double expected = 0.01 * e / ((1.0 + e) * (1.0 + e));
    EXPECT_NEAR(t.jacobian(theta), expected, 1e-12 * expected);
    if (std::abs(theta) < 5) {
      const double fd = (t.to_natural(theta + h) - t.to_natural(theta - h)) / (2 * h);
      EXPECT_NEAR(t.jacobian(theta), fd, 1e-8);
    }
    if (std::abs(theta) < 20) EXPECT_NEAR(std::exp(t.log_jacobian(theta)), t.jacobian(theta), 1e-14);
    const double dfd = (t.log_jacobian(theta + h) - t.log_jacobian(theta - h)) / (2 * h);
    EXPECT_NEAR(t.d_log_jacobian(theta), dfd, 1e-6);
  }
}
