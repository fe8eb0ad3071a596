#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "epihmc/compartmental_ode.hpp"
#include "epihmc/synthdata.hpp"

using namespace epihmc;

namespace {

ModelSpec make_spec(ModelFamily family, int m, int k) {
  ModelSpec s = synthetic_model();
  s.family = family;
  s.M = m;
  s.K = k;
  return s;
}

// Fixed-step classical RK4 on the daily grid.
std::vector<std::vector<double>> rk4_oracle(const CompartmentalModel& model, const ParamVector& p, double h) {
  const ModelSpec& spec = model.spec();
  std::vector<double> y = model.initial_state(p.seed0);
  const auto n = y.size();
  std::vector<std::vector<double>> out{y};
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  const int per_day = static_cast<int>(std::lround(1.0 / h));
  double t = spec.t0();
  for (int day = 0; day < spec.horizon; ++day) {
    for (int s = 0; s < per_day; ++s) {
      model.rhs(t, y, p, k1);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
      model.rhs(t + 0.5 * h, tmp, p, k2);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
      model.rhs(t + 0.5 * h, tmp, p, k3);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
      model.rhs(std::min(t + h, spec.spline.t1), tmp, p, k4);
      for (std::size_t i = 0; i < n; ++i) y[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
      t = spec.t0() + day + (s + 1) * h;
    }
    t = spec.t0() + day + 1;
    out.push_back(y);
  }
  return out;
}

}  // namespace

TEST(RungeKutta, ExponentialDecay) {
  std::vector<double> y{1.0};
  std::vector<double> grid{0.5, 1.0, 2.0, 5.0};
  std::vector<double> got;
  integrate_dopri5([](double, std::span<const double> x, std::span<double> dx) { dx[0] = -x[0]; }, 0.0,
                   std::span<double>(y), grid, Tolerances{1e-10, 1e-12},
                   [&](std::size_t, double t, std::span<const double> x) {
                     got.push_back(x[0]);
                     EXPECT_EQ(t, grid[got.size() - 1]);
                   });
  ASSERT_EQ(got.size(), grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(got[i], std::exp(-grid[i]), 1e-9);
}

TEST(RungeKutta, NonFiniteDerivativeFails) {
  std::vector<double> y{1.0};
  std::vector<double> grid{1.0};
  EXPECT_THROW(integrate_dopri5([](double, std::span<const double>, std::span<double> dx) { dx[0] = NAN; }, 0.0,
                                std::span<double>(y), grid, Tolerances{}, [](auto, auto, auto) {}),
               IntegrationFailure);
}

TEST(RungeKutta, BlowUpReportsTime) {
  // y' = y^2, y(0) = 1 explodes at t = 1.
  std::vector<double> y{1.0};
  std::vector<double> grid{2.0};
  try {
    integrate_dopri5([](double, std::span<const double> x, std::span<double> dx) { dx[0] = x[0] * x[0]; }, 0.0,
                     std::span<double>(y), grid, Tolerances{1e-8, 1e-8}, [](auto, auto, auto) {});
    FAIL() << "expected failure";
  } catch (const IntegrationFailure& e) {
    EXPECT_NEAR(e.time(), 1.0, 1e-2);
  }
}

TEST(CompartmentalModel, StateLayout) {
  const ModelSpec s = make_spec(ModelFamily::SEMIKR, 2, 3);
  EXPECT_EQ(s.state_dim(), 8);
  EXPECT_EQ(s.index_e(0), 1);
  EXPECT_EQ(s.index_i(0), 3);
  EXPECT_EQ(s.index_r(), 6);
  EXPECT_EQ(s.index_c(), 7);
  EXPECT_EQ(s.name(), "SE2I3R");
  EXPECT_EQ(make_spec(ModelFamily::SIKR, 1, 1).name(), "SIR");
  EXPECT_EQ(make_spec(ModelFamily::SIKR, 1, 1).state_dim(), 4);
}

TEST(CompartmentalModel, InitialState) {
  const CompartmentalModel model(synthetic_model());
  const auto y = model.initial_state(10.0);
  EXPECT_DOUBLE_EQ(y[0], 2189138.0 - 10.0);
  EXPECT_DOUBLE_EQ(y[1], 10.0);
  EXPECT_DOUBLE_EQ(y[2], 0.0);
  EXPECT_DOUBLE_EQ(y.back(), 10.0);
  EXPECT_THROW(model.initial_state(0.0), InvalidArgument);
  EXPECT_THROW(model.initial_state(2189138.0), InvalidArgument);
}

TEST(CompartmentalModel, MatchesFixedStepOracle) {
  for (auto [family, m, k] : {std::tuple{ModelFamily::SEMIKR, 1, 3}, std::tuple{ModelFamily::SIKR, 1, 1}}) {
    const CompartmentalModel model(make_spec(family, m, k));
    ParamVector p = synthetic_parameters();
    const auto traj = model.integrate(p, Tolerances::for_population(model.spec().N, 1e-10, 1e-10));
    const auto ref = rk4_oracle(model, p, 1e-3);
    for (std::size_t j = 0; j < traj.size(); ++j) {
      for (int i = 0; i < model.spec().state_dim(); ++i) {
        EXPECT_NEAR(traj.state(j)[static_cast<std::size_t>(i)], ref[j][static_cast<std::size_t>(i)],
                    1e-7 * model.spec().N)
            << model.spec().name() << " day " << j << " comp " << i;
      }
    }
  }
}

TEST(CompartmentalModel, ConservationAndMonotoneCounter) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> jitter(0.0, 0.5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const ModelSpec spec = make_spec(trial % 2 ? ModelFamily::SEMIKR : ModelFamily::SIKR, 1 + trial % 3, 1 + trial % 4);
    const CompartmentalModel model(spec);
    ParamVector p = synthetic_parameters();
    p.alpha = 0.2 + u(rng);
    p.gamma = 0.05 + 0.3 * u(rng);
    p.seed0 = 1.0 + 100.0 * u(rng);
    for (double& b : p.beta) b += jitter(rng);
    const double rtol = 1e-8;
    const auto traj = model.integrate(p, Tolerances::for_population(spec.N, rtol));
    double prev = -1.0;
    for (std::size_t j = 0; j < traj.size(); ++j) {
      const auto y = traj.state(j);
      double total = 0.0;
      for (int i = 0; i < spec.index_c(); ++i) total += y[static_cast<std::size_t>(i)];
      EXPECT_LE(std::abs(total - spec.N), 10 * rtol * spec.N);
      const double c = y[static_cast<std::size_t>(spec.index_c())];
      EXPECT_GE(c, prev);
      prev = c;
    }
  }
}

TEST(CompartmentalModel, DailyIncidenceClampsNegatives) {
  Trajectory traj({0.0, 1.0, 2.0, 3.0}, 1, 1000.0);
  traj.state(0)[0] = 10.0;
  traj.state(1)[0] = 15.0;
  traj.state(2)[0] = 14.9999999;  // solver noise
  traj.state(3)[0] = 13.0;        // genuine problem
  const auto inc = daily_incidence(traj, 0);
  ASSERT_EQ(inc.values.size(), 3u);
  EXPECT_DOUBLE_EQ(inc.values[0], 5.0);
  EXPECT_DOUBLE_EQ(inc.values[1], 0.0);
  EXPECT_DOUBLE_EQ(inc.values[2], 0.0);
  EXPECT_EQ(inc.clamped, 2);
  EXPECT_EQ(inc.large_negative, 1);
}

TEST(CompartmentalModel, TransmissionOverflowIsIntegrationFailure) {
  const CompartmentalModel model(synthetic_model());
  ParamVector p = synthetic_parameters();
  std::fill(p.beta.begin(), p.beta.end(), 1000.0);
  try {
    model.integrate(p);
    FAIL() << "expected failure";
  } catch (const IntegrationFailure& e) {
    EXPECT_NE(std::string(e.what()).find("beta_"), std::string::npos);
  }
  // finite but explosive rate: the step controller gives up instead
  p = synthetic_parameters();
  p.beta[5] = 800.0;
  EXPECT_THROW(model.integrate(p), IntegrationFailure);
}

TEST(CompartmentalModel, WrongBetaLengthThrows) {
  const CompartmentalModel model(synthetic_model());
  ParamVector p = synthetic_parameters();
  p.beta.pop_back();
  EXPECT_THROW(model.integrate(p), InvalidArgument);
}

TEST(CompartmentalModel, SplineWindowMustCoverHorizon) {
  ModelSpec s = synthetic_model();
  s.horizon = 101;
  EXPECT_THROW(CompartmentalModel{s}, InvalidArgument);
}

// With transmission switched off, the flux out of the last exposed stage of
// a seed placed in E_1 is seed * Erlang(M, M alpha) density.
TEST(CompartmentalModel, ExposedChainIsErlang) {
  for (int m : {1, 2, 3, 5}) {
    ModelSpec s = make_spec(ModelFamily::SEMIKR, m, 3);
    const CompartmentalModel model(s);
    ParamVector p = synthetic_parameters();
    p.alpha = 0.5;
    std::fill(p.beta.begin(), p.beta.end(), -200.0);
    p.seed0 = 1.0;
    const auto traj = model.integrate(p, Tolerances{1e-12, 1e-14});
    double worst = 0.0;
    for (std::size_t j = 0; j < traj.size(); ++j) {
      const double flux = m * p.alpha * traj.state(j)[static_cast<std::size_t>(s.index_e(m - 1))];
      worst = std::max(worst, std::abs(flux - erlang_exit_flux(m, p.alpha, traj.times()[j])));
    }
    EXPECT_LE(worst, 1e-6) << "M=" << m;
  }
}

TEST(CompartmentalModel, ErlangDensityValues) {
  EXPECT_NEAR(erlang_exit_flux(1, 0.5, 2.0), 0.5 * std::exp(-1.0), 1e-15);
  // Erlang(2, 1): t e^{-t}
  EXPECT_NEAR(erlang_exit_flux(2, 0.5, 3.0), 3.0 * std::exp(-3.0), 1e-15);
  EXPECT_DOUBLE_EQ(erlang_exit_flux(3, 0.5, 0.0), 0.0);
  EXPECT_THROW(erlang_exit_flux(0, 0.5, 1.0), InvalidArgument);
}
