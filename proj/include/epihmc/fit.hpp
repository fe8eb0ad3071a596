#pragma once

/// \file
/// End-to-end posterior sampling for a compartmental model: initial points,
/// warm start, adapted GHMC chains, and draws mapped back to natural units.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "epihmc/diagnostics.hpp"
#include "epihmc/posterior.hpp"
#include "epihmc/sampler.hpp"

namespace epihmc {

struct WarmStart {
  double learning_rate = 1e-6;
  int steps = 3000;
};

/// Starting values before the warm start: scalar epidemic parameters from
/// their priors, a flat log transmission, mild overdispersion.
struct InitialValues {
  double phi_inv = 0.005;
  double tau = 1.0;
  double log_beta = -1.6;
};

struct ChainDraws {
  int chain = 0;
  std::uint64_t seed = 0;
  std::vector<ParamVector> draws;
  std::vector<double> log_posterior;  // natural-space log posterior of each draw
  std::vector<bool> accepted;
  std::vector<double> hamiltonian;
  int integration_failures = 0;
  HMCSettings settings;
  std::optional<std::string> error;

  double acceptance_rate() const {
    if (accepted.empty()) return 0.0;
    return static_cast<double>(std::count(accepted.begin(), accepted.end(), true)) /
           static_cast<double>(accepted.size());
  }
};

struct ChainSet {
  ModelSpec spec;
  std::vector<ChainDraws> chains;

  /// Draws of flat parameter `index` per chain, for diagnostics.
  std::vector<std::vector<double>> parameter(int index) const {
    std::vector<std::vector<double>> out;
    for (const auto& c : chains) {
      std::vector<double> v;
      v.reserve(c.draws.size());
      for (const auto& p : c.draws) v.push_back(flatten(spec, p)[static_cast<std::size_t>(index)]);
      out.push_back(std::move(v));
    }
    return out;
  }

  std::vector<ParamVector> pooled() const {
    std::vector<ParamVector> all;
    for (const auto& c : chains) all.insert(all.end(), c.draws.begin(), c.draws.end());
    return all;
  }

  bool any_error() const {
    return std::any_of(chains.begin(), chains.end(), [](const ChainDraws& c) { return c.error.has_value(); });
  }
};

inline ParamVector initial_parameters(const Posterior& posterior, std::uint64_t seed, int chain,
                                      const InitialValues& init = {}) {
  // Separate stream from the sampler's so the two never share draws.
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(chain), 0x1a17u};
  std::mt19937_64 rng(seq);
  const ModelSpec& spec = posterior.spec();
  const PriorConfig& pc = posterior.priors();
  ParamVector p;
  p.alpha = spec.has_exposed() ? sample_prior(pc.alpha, rng, true) : 0.0;
  p.gamma = sample_prior(pc.gamma, rng, true);
  p.seed0 = sample_prior(pc.seed0, rng, true);
  p.phi_inv = init.phi_inv;
  p.tau = init.tau;
  p.beta.assign(static_cast<std::size_t>(spec.basis_size()), init.log_beta);
  return p;
}

inline ChainSet fit_posterior(const Posterior& posterior, const HMCSettings& settings, const WarmStart& warm = {},
                              int threads = 1, const RunOptions& options = {}, const InitialValues& init = {}) {
  const UnconstrainedPosterior target(posterior);
  auto initial = [&](int chain) {
    const ParamVector p0 = initial_parameters(posterior, settings.seed, chain, init);
    return gradient_ascent(target, target.to_unconstrained(p0), warm.learning_rate, warm.steps);
  };
  const auto results = run_chains(target, initial, settings, threads, options);

  ChainSet set;
  set.spec = posterior.spec();
  for (const auto& r : results) {
    ChainDraws c;
    c.chain = r.chain;
    c.seed = r.seed;
    c.accepted = r.accepted;
    c.hamiltonian = r.hamiltonian;
    c.integration_failures = r.invalid_proposals;
    c.settings = r.settings;
    c.error = r.error;
    for (std::size_t i = 0; i < r.draws.size(); ++i) {
      c.draws.push_back(target.to_natural(r.draws[i]));
      double log_jac = 0.0;
      for (std::size_t k = 0; k < r.draws[i].size(); ++k) log_jac += target.transforms()[k].log_jacobian(r.draws[i][k]);
      c.log_posterior.push_back(r.log_density[i] - log_jac);
    }
    set.chains.push_back(std::move(c));
  }
  return set;
}

/// Per-parameter convergence summary over all chains.
struct ParameterDiagnostics {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double median = 0.0;
  double q975 = 0.0;
  RhatResult rhat;        // split chains
  RhatResult rhat_plain;  // whole chains
  double ess = 0.0;
};

inline std::vector<ParameterDiagnostics> diagnose(const ChainSet& set) {
  std::vector<ParameterDiagnostics> out;
  const auto names = param_names(set.spec);
  std::vector<ChainDraws> usable;
  for (const auto& c : set.chains) {
    if (!c.draws.empty()) usable.push_back(c);
  }
  if (usable.empty()) return out;
  std::size_t n = usable.front().draws.size();
  for (const auto& c : usable) n = std::min(n, c.draws.size());
  ChainSet trimmed{set.spec, {}};
  for (auto c : usable) {
    c.draws.resize(n);
    trimmed.chains.push_back(std::move(c));
  }
  for (int k = 0; k < static_cast<int>(names.size()); ++k) {
    ParameterDiagnostics d;
    d.name = names[static_cast<std::size_t>(k)];
    const auto chains = trimmed.parameter(k);
    std::vector<double> pooled;
    for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
    double s = 0.0;
    for (double x : pooled) s += x;
    d.mean = s / static_cast<double>(pooled.size());
    double v = 0.0;
    for (double x : pooled) v += (x - d.mean) * (x - d.mean);
    d.sd = pooled.size() > 1 ? std::sqrt(v / static_cast<double>(pooled.size() - 1)) : 0.0;
    d.q025 = quantile(pooled, 0.025);
    d.median = quantile(pooled, 0.5);
    d.q975 = quantile(pooled, 0.975);
    if (chains.size() >= 1 && n >= 4) d.rhat = split_gelman_rubin(chains);
    if (chains.size() >= 2 && n >= 2) d.rhat_plain = gelman_rubin(chains);
    d.ess = effective_sample_size(chains);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace epihmc
