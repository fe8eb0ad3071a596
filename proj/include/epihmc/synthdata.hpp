#pragma once

/// \file
/// Synthetic two-wave benchmark: wave-shaped transmission, its spline
/// approximation, and Negative Binomial data drawn from the reference model.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "epihmc/compartmental_ode.hpp"
#include "epihmc/posterior.hpp"
#include "epihmc/spline_basis.hpp"

namespace epihmc {

/// exp(sin(2 pi t / a) - t / a) / b
inline double beta_wave(double t, double a, double b) {
  if (!(a > 0.0)) throw InvalidArgument("wave period scale a must be positive");
  if (!(b > 0.0)) throw InvalidArgument("wave amplitude divisor b must be positive");
  return std::exp(std::sin(2.0 * std::numbers::pi * t / a) - t / a) / b;
}

struct SplineFit {
  std::vector<double> coeffs;
  double max_log_error = 0.0;  // sup over the fitting grid
};

/// Least-squares fit of sum beta_i B_i(t) to log curve(t) on a grid of
/// spacing `grid_step`, with a small second-difference ridge.
inline SplineFit fit_spline_to_curve(const std::function<double(double)>& curve, const SplineConfig& config,
                                     double grid_step = 0.1, double ridge = 1e-6) {
  const KnotVector kv = make_knots(config);
  const int m = kv.basis_size();
  const auto points = static_cast<int>(std::llround((config.t1 - config.t0) / grid_step)) + 1;
  Eigen::MatrixXd design(points, m);
  Eigen::VectorXd target(points);
  for (int i = 0; i < points; ++i) {
    const double t = std::min(config.t0 + grid_step * i, config.t1);
    const double value = curve(t);
    if (!(value > 0.0)) throw InvalidArgument("curve must be positive to fit on the log scale");
    target(i) = std::log(value);
    const auto basis = eval_basis(kv, t);
    for (int k = 0; k < m; ++k) design(i, k) = basis[static_cast<std::size_t>(k)];
  }
  Eigen::MatrixXd normal = design.transpose() * design;
  if (ridge > 0.0 && m > 2) normal += ridge * penalty_matrix(m, 2).entries;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
  if (ldlt.info() != Eigen::Success) throw InvalidArgument("singular normal equations in spline fit");
  const Eigen::VectorXd coeffs = ldlt.solve(design.transpose() * target);
  SplineFit fit;
  fit.coeffs.assign(coeffs.data(), coeffs.data() + m);
  fit.max_log_error = (design * coeffs - target).cwiseAbs().maxCoeff();
  return fit;
}

/// How the second Negative Binomial argument is read when drawing data.
enum class DispersionConvention {
  kInverse,  // phi = 1 / phi_inv (phi_inv = 0.1 gives variance C + C^2/10)
  kDirect    // phi = phi_inv
};

/// Reference parameters of the two-wave benchmark (SEI3R, 12 cubic B-splines).
inline ParamVector synthetic_parameters() {
  ParamVector p;
  p.alpha = 0.5;
  p.gamma = 0.1;
  p.seed0 = 10.0;
  p.phi_inv = 0.1;
  p.tau = 1.0;
  p.beta = {-1.8699, -1.3014, -0.2422, -1.5110, -3.3045, -3.0917,
            -1.5683, -1.5705, -3.4479, -4.5214, -3.3348, -2.8091};
  return p;
}

inline ModelSpec synthetic_model() {
  ModelSpec spec;
  spec.family = ModelFamily::SEMIKR;
  spec.M = 1;
  spec.K = 3;
  spec.N = 2189138.0;
  spec.spline = SplineConfig{0.0, 100.0, 10, 3};
  spec.horizon = 100;
  return spec;
}

struct SyntheticRecipe {
  double a = 50.0;
  double b = 4.0;
  ModelSpec model = synthetic_model();
  ParamVector parameters = synthetic_parameters();
  std::uint64_t seed = 1;
  DispersionConvention convention = DispersionConvention::kInverse;
  UnderReporting eta{};  // applied by binomial thinning of the drawn counts
  std::chrono::sys_days start_date{std::chrono::year{2020} / 3 / 1};

  void validate() const {
    if (!(a > 0.0 && b > 0.0)) throw InvalidArgument("wave parameters a and b must be positive");
    model.validate();
    if (!is_feasible(model, parameters)) throw InvalidArgument("synthetic parameters are infeasible for the model");
    eta.validate();
  }
};

struct SyntheticDataset {
  IncidenceSeries series;
  std::vector<double> true_means;  // daily incidence of the generating trajectory
  ParamVector parameters;
  double dispersion = 0.0;  // phi used for the draws
};

inline SyntheticDataset generate_dataset(const SyntheticRecipe& recipe, const Tolerances& tol) {
  recipe.validate();
  const CompartmentalModel model(recipe.model);
  const DailyIncidence inc = daily_incidence(model, model.integrate(recipe.parameters, tol));
  SyntheticDataset out;
  out.parameters = recipe.parameters;
  out.true_means = inc.values;
  out.dispersion = recipe.convention == DispersionConvention::kInverse ? recipe.parameters.phi()
                                                                      : recipe.parameters.phi_inv;
  out.series.start_date = recipe.start_date;
  out.series.eta = recipe.eta;
  std::mt19937_64 rng(recipe.seed);
  for (std::size_t j = 0; j < inc.values.size(); ++j) {
    std::int64_t count = sample_neg_binom(rng, inc.values[j], out.dispersion);
    const double eta = eval_eta(recipe.eta, static_cast<double>(j + 1));
    if (eta < 1.0 && count > 0) {
      std::binomial_distribution<std::int64_t> thin(count, eta);
      count = thin(rng);
    }
    out.series.counts.push_back(count);
  }
  return out;
}

inline SyntheticDataset generate_dataset(const SyntheticRecipe& recipe) {
  return generate_dataset(recipe, Tolerances::for_population(recipe.model.N));
}

/// Benchmark parameters with the transmission refitted to beta_wave(a, b)
/// on the model's own spline; the reference coefficients when a, b and the
/// basis are the benchmark ones.
inline ParamVector wave_parameters(const ModelSpec& model, double a, double b) {
  ParamVector p = synthetic_parameters();
  if (a == 50.0 && b == 4.0 && model.spline == synthetic_model().spline) return p;
  p.beta = fit_spline_to_curve([&](double t) { return beta_wave(t, a, b); }, model.spline).coeffs;
  return p;
}

/// Reproduction number path of the regional stand-in: fast early growth,
/// a first lockdown, a summer resurgence and a second, milder rise.
inline double regional_r0(double t) {
  return 0.7 + 4.3 * std::exp(-t / 15.0) + 1.0 * std::exp(-std::pow((t - 160.0) / 45.0, 2)) +
         0.4 * std::exp(-std::pow((t - 280.0) / 30.0, 2));
}

/// 300-day SI3R stand-in for a regional case series: two waves, reported
/// through an under-reporting ramp from 0.15 (day 92) to 0.54 (day 231).
inline SyntheticRecipe regional_standin(std::uint64_t seed = 1) {
  SyntheticRecipe r;
  r.model.family = ModelFamily::SIKR;
  r.model.M = 1;
  r.model.K = 3;
  r.model.N = 2189138.0;
  r.model.spline = SplineConfig{0.0, 300.0, 12, 3};
  r.model.horizon = 300;
  r.parameters.alpha = 0.0;
  r.parameters.gamma = 0.1;
  r.parameters.seed0 = 21.88;
  r.parameters.phi_inv = 0.1;
  r.parameters.tau = 1.0;
  r.parameters.beta =
      fit_spline_to_curve([](double t) { return 0.1 * regional_r0(t); }, r.model.spline).coeffs;
  r.eta = UnderReporting{{{92.0, 0.15}, {231.0, 0.54}}};
  r.seed = seed;
  r.start_date = std::chrono::sys_days{std::chrono::year{2020} / 2 / 10};
  return r;
}

/// Indices of strict local maxima of a series (plateaus count once).
inline std::vector<std::size_t> local_maxima(std::span<const double> x) {
  std::vector<std::size_t> peaks;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    if (!(x[i] > x[i - 1])) continue;
    std::size_t j = i;
    while (j + 1 < x.size() && x[j + 1] == x[i]) ++j;
    if (j + 1 < x.size() && x[j + 1] < x[i]) peaks.push_back(i);
    i = j;
  }
  return peaks;
}

}  // namespace epihmc
