#pragma once

/// \file
/// Central finite-difference check of the analytic log-posterior gradient.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "epihmc/posterior.hpp"
#include "epihmc/synthdata.hpp"

namespace epihmc {

struct GradientComparison {
  ParamVector point;
  std::vector<double> analytic;
  std::vector<double> numeric;
  std::vector<double> error;  // |analytic - numeric| / max(1, |numeric|)
  double max_error = 0.0;
  int worst = -1;
  bool evaluated = false;
  std::string message;
};

/// Compares each gradient component with a central difference of relative
/// step `rel_step` (absolute floor 1e-7).
inline GradientComparison compare_gradient(const Posterior& posterior, const ParamVector& p, double rel_step = 1e-5) {
  GradientComparison out;
  out.point = p;
  const ModelSpec& spec = posterior.spec();
  const PosteriorValue v = posterior.evaluate(p, true);
  if (!v.ok()) {
    out.message = v.message;
    return out;
  }
  out.analytic = v.gradient;
  const auto flat = flatten(spec, p);
  out.numeric.assign(flat.size(), 0.0);
  out.error.assign(flat.size(), 0.0);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double h = std::max(rel_step * std::abs(flat[i]), 1e-7);
    auto plus = flat;
    auto minus = flat;
    plus[i] += h;
    minus[i] -= h;
    const PosteriorValue vp = posterior.evaluate(unflatten(spec, plus), false);
    const PosteriorValue vm = posterior.evaluate(unflatten(spec, minus), false);
    if (!vp.ok() || !vm.ok()) {
      out.message = "finite-difference neighbour failed for component " + std::to_string(i);
      return out;
    }
    out.numeric[i] = (vp.log_posterior - vm.log_posterior) / (2.0 * h);
    out.error[i] = std::abs(out.analytic[i] - out.numeric[i]) / std::max(1.0, std::abs(out.numeric[i]));
    if (out.worst < 0 || out.error[i] > out.max_error) {
      out.max_error = out.error[i];
      out.worst = static_cast<int>(i);
    }
  }
  out.evaluated = true;
  return out;
}

/// A feasible parameter vector near the benchmark regime: epidemic scalars
/// from their priors, moderate dispersion and smoothness, log transmission
/// jittered around the benchmark curve.
template <class Rng>
ParamVector random_feasible_point(const ModelSpec& spec, const PriorConfig& priors, Rng& rng) {
  ParamVector p;
  p.alpha = spec.has_exposed() ? sample_prior(priors.alpha, rng, true) : 0.0;
  p.gamma = sample_prior(priors.gamma, rng, true);
  p.seed0 = std::min(sample_prior(priors.seed0, rng, true), 0.5 * spec.N);
  std::uniform_real_distribution<double> phi_inv(0.02, 0.5);
  std::uniform_real_distribution<double> tau(0.3, 2.0);
  std::normal_distribution<double> jitter(0.0, 0.3);
  p.phi_inv = phi_inv(rng);
  p.tau = tau(rng);
  const auto reference = synthetic_parameters().beta;
  const auto m = static_cast<std::size_t>(spec.basis_size());
  p.beta.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double base = reference[std::min(i * reference.size() / m, reference.size() - 1)];
    p.beta[i] = base + jitter(rng);
  }
  return p;
}

}  // namespace epihmc
