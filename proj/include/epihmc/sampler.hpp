#pragma once

/// \file
/// Generalised HMC on an unconstrained log density: leapfrog integration,
/// partial momentum refresh, flip on rejection, dual-averaging step-size
/// adaptation, gradient-ascent warm start and independent multi-chain runs.
///
/// A target is any callable
///   std::optional<double>(std::span<const double> x, std::span<double> grad)
/// returning log density (up to a constant) and filling grad when it is
/// non-empty; nullopt marks an invalid point.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "epihmc/errors.hpp"

namespace epihmc {

enum class MomentumOnAccept {
  kPostTrajectory,  // keep q* (velocity continues through the accepted trajectory)
  kPreTrajectory    // keep q(0), the refreshed momentum before integration
};

struct HMCSettings {
  double step_size = 0.01;
  int leaps = 100;
  bool jitter = true;  // leaps drawn uniformly in [0.8 L, 1.2 L]
  double psi = 0.5;
  std::vector<double> mass;  // diagonal; empty means identity
  int n_burnin = 1000;
  int n_production = 2000;
  int n_chains = 2;
  std::uint64_t seed = 1;
  MomentumOnAccept momentum_on_accept = MomentumOnAccept::kPostTrajectory;
  int max_leaps = 250;
  double target_accept = 0.9;

  void validate() const {
    if (!(step_size > 0.0)) throw InvalidArgument("step size must be positive");
    if (leaps < 0) throw InvalidArgument("leaps must be non-negative");
    if (!(psi > 0.0 && psi <= 1.0)) throw InvalidArgument("psi must lie in (0, 1]");
    for (double m : mass) {
      if (!(m > 0.0 && std::isfinite(m))) throw InvalidArgument("mass entries must be positive");
    }
    if (n_burnin < 0 || n_production < 0) throw InvalidArgument("iteration counts must be non-negative");
    if (n_chains < 1) throw InvalidArgument("need at least one chain");
    if (max_leaps < 1) throw InvalidArgument("max_leaps must be >= 1");
    if (!(target_accept > 0.0 && target_accept < 1.0)) throw InvalidArgument("target acceptance must lie in (0, 1)");
  }
};

/// Per-chain random stream derived from the master seed.
inline std::mt19937_64 chain_rng(std::uint64_t seed, int chain) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(chain)};
  return std::mt19937_64(seq);
}

struct HMCState {
  std::vector<double> position;
  std::vector<double> momentum;
  std::vector<double> gradient;
  double log_density = -std::numeric_limits<double>::infinity();
};

template <class Target>
std::optional<HMCState> make_state(const Target& target, std::vector<double> x) {
  HMCState s;
  s.gradient.assign(x.size(), 0.0);
  s.momentum.assign(x.size(), 0.0);
  const auto value = target(std::span<const double>(x), std::span<double>(s.gradient));
  if (!value) return std::nullopt;
  s.position = std::move(x);
  s.log_density = *value;
  return s;
}

inline double kinetic_energy(std::span<const double> q, std::span<const double> mass) {
  double k = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) k += q[i] * q[i] / (mass.empty() ? 1.0 : mass[i]);
  return 0.5 * k;
}

/// L velocity-Verlet steps. Updates (x, q, grad, log_density) in place;
/// returns false if the target fails part-way (state then unspecified).
template <class Target>
bool leapfrog(HMCState& s, double h, int steps, const Target& target, std::span<const double> mass) {
  const std::size_t n = s.position.size();
  for (int l = 0; l < steps; ++l) {
    for (std::size_t i = 0; i < n; ++i) s.momentum[i] += 0.5 * h * s.gradient[i];
    for (std::size_t i = 0; i < n; ++i) s.position[i] += h * s.momentum[i] / (mass.empty() ? 1.0 : mass[i]);
    const auto value = target(std::span<const double>(s.position), std::span<double>(s.gradient));
    if (!value) return false;
    s.log_density = *value;
    for (std::size_t i = 0; i < n; ++i) s.momentum[i] += 0.5 * h * s.gradient[i];
  }
  return true;
}

struct StepInfo {
  bool accepted = false;
  bool valid = true;  // false when the proposal hit an invalid point
  double delta_h = std::numeric_limits<double>::infinity();
  double accept_prob = 0.0;
  int leaps = 0;
  std::vector<double> refreshed_momentum;  // q(0)
};

template <class Rng>
int draw_leaps(const HMCSettings& settings, Rng& rng) {
  if (!settings.jitter || settings.leaps == 0) return settings.leaps;
  std::uniform_real_distribution<double> u(0.8, 1.2);
  return std::max(1, static_cast<int>(std::lround(settings.leaps * u(rng))));
}

/// One GHMC transition from `s`.
template <class Target, class Rng>
StepInfo ghmc_step(HMCState& s, const HMCSettings& settings, const Target& target, Rng& rng) {
  const std::size_t n = s.position.size();
  const std::span<const double> mass(settings.mass);
  std::normal_distribution<double> normal(0.0, 1.0);

  const double keep = std::sqrt(1.0 - settings.psi);
  const double mix = std::sqrt(settings.psi);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = normal(rng) * std::sqrt(mass.empty() ? 1.0 : mass[i]);
    s.momentum[i] = keep * s.momentum[i] + mix * u;
  }

  StepInfo info;
  info.refreshed_momentum = s.momentum;
  info.leaps = draw_leaps(settings, rng);
  const double h0 = -s.log_density + kinetic_energy(s.momentum, mass);

  HMCState proposal = s;
  info.valid = leapfrog(proposal, settings.step_size, info.leaps, target, mass);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double log_u = std::log(uniform(rng));
  if (info.valid) {
    info.delta_h = -proposal.log_density + kinetic_energy(proposal.momentum, mass) - h0;
    if (!std::isfinite(info.delta_h)) info.valid = false;
  }
  if (info.valid) {
    info.accept_prob = info.delta_h <= 0.0 ? 1.0 : std::exp(-info.delta_h);
    info.accepted = log_u < -info.delta_h;
  }

  if (info.accepted) {
    if (settings.momentum_on_accept == MomentumOnAccept::kPreTrajectory) proposal.momentum = info.refreshed_momentum;
    s = std::move(proposal);
  } else {
    for (std::size_t i = 0; i < n; ++i) s.momentum[i] = -info.refreshed_momentum[i];
  }
  return info;
}

/// Dual averaging of log step size toward a target mean acceptance.
class DualAveraging {
 public:
  DualAveraging(double initial_step, double target_accept, double gamma = 0.05, double t0 = 10.0,
                double kappa = 0.75)
      : mu_(std::log(10.0 * initial_step)), target_(target_accept), gamma_(gamma), t0_(t0), kappa_(kappa),
        log_step_(std::log(initial_step)) {}

  /// Feeds one acceptance probability; returns the next step size to use.
  double update(double accept_prob) {
    ++t_;
    const double t = static_cast<double>(t_);
    h_bar_ = (1.0 - 1.0 / (t + t0_)) * h_bar_ + (target_ - accept_prob) / (t + t0_);
    log_step_ = mu_ - std::sqrt(t) / gamma_ * h_bar_;
    const double w = std::pow(t, -kappa_);
    log_avg_ = w * log_step_ + (1.0 - w) * log_avg_;
    return std::exp(log_step_);
  }

  double current() const { return std::exp(log_step_); }
  /// Averaged step size, the value to keep after adaptation.
  double averaged() const { return t_ == 0 ? current() : std::exp(log_avg_); }
  long iterations() const { return t_; }

 private:
  double mu_, target_, gamma_, t0_, kappa_;
  double h_bar_ = 0.0;
  double log_step_;
  double log_avg_ = 0.0;
  long t_ = 0;
};

/// Statistics of a pilot run used to choose sampler settings.
struct PilotStatistics {
  double initial_step = 0.01;                   // step size the pilot started from
  std::vector<double> accept_probs;             // one per pilot step
  std::vector<std::vector<double>> positions;   // unconstrained draws; empty to keep the mass
};

/// 1 / max(var_i, 1e-8) per coordinate over a set of positions.
inline std::vector<double> inverse_variances(const std::vector<std::vector<double>>& positions) {
  if (positions.size() < 2) throw InvalidArgument("need at least two positions to estimate variances");
  const std::size_t n = positions.front().size();
  const double count = static_cast<double>(positions.size());
  std::vector<double> mass(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (const auto& x : positions) mean += x[i];
    mean /= count;
    double var = 0.0;
    for (const auto& x : positions) var += (x[i] - mean) * (x[i] - mean);
    var /= count - 1.0;
    mass[i] = 1.0 / std::max(var, 1e-8);
  }
  return mass;
}

inline bool pilot_is_degenerate(const PilotStatistics& pilot) {
  return std::all_of(pilot.accept_probs.begin(), pilot.accept_probs.end(), [](double a) { return a <= 1e-10; });
}

/// Step size by replaying dual averaging over the pilot acceptance record,
/// diagonal mass from inverse pilot variances, L = ceil(1/h). A degenerate
/// pilot returns h/10 with the mass unchanged.
inline HMCSettings adapt_settings(const PilotStatistics& pilot, HMCSettings base) {
  if (pilot.accept_probs.empty()) throw InvalidArgument("pilot run has no steps");
  if (pilot_is_degenerate(pilot)) {
    base.step_size = pilot.initial_step / 10.0;
  } else {
    DualAveraging da(pilot.initial_step, base.target_accept);
    for (double a : pilot.accept_probs) da.update(a);
    // The replay extrapolates when the pilot ran at a fixed step; keep it sane.
    base.step_size = std::clamp(da.averaged(), pilot.initial_step * 1e-2, pilot.initial_step * 1e2);
  }
  if (pilot.positions.size() >= 2) base.mass = inverse_variances(pilot.positions);
  base.leaps = std::clamp(static_cast<int>(std::ceil(1.0 / base.step_size)), 1, base.max_leaps);
  return base;
}

/// Iterates x <- x + rate * grad, keeping only steps that do not lower the
/// log density; a rejected or failed step halves the rate. More than 30
/// halvings caused by failed evaluations abort.
template <class Target>
std::vector<double> gradient_ascent(const Target& target, std::vector<double> x0, double learning_rate, int steps) {
  std::vector<double> grad(x0.size()), trial_grad(x0.size()), trial(x0.size());
  const auto start = target(std::span<const double>(x0), std::span<double>(grad));
  if (!start) throw IntegrationFailure(0.0, "warm start: initial point cannot be evaluated");
  if (learning_rate == 0.0 || steps <= 0) return x0;
  double value = *start;
  double rate = learning_rate;
  int failures = 0;
  for (int it = 0; it < steps; ++it) {
    for (std::size_t i = 0; i < x0.size(); ++i) trial[i] = x0[i] + rate * grad[i];
    const auto v = target(std::span<const double>(trial), std::span<double>(trial_grad));
    if (!v) {
      if (++failures > 30) {
        std::string where;
        for (double t : trial) where += (where.empty() ? "" : ", ") + std::to_string(t);
        throw IntegrationFailure(0.0, "warm start: repeated evaluation failures at (" + where + ")");
      }
      rate *= 0.5;
      continue;
    }
    if (*v < value) {
      rate *= 0.5;
      continue;
    }
    x0.swap(trial);
    grad.swap(trial_grad);
    value = *v;
  }
  return x0;
}

/// Output of one chain in unconstrained coordinates.
struct ChainResult {
  int chain = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> draws;  // production positions
  std::vector<double> log_density;
  std::vector<bool> accepted;
  std::vector<double> hamiltonian;   // H after each production step
  std::vector<double> delta_h;       // proposal energy error (inf when invalid)
  int invalid_proposals = 0;         // over burn-in and production
  HMCSettings settings;              // after adaptation
  std::optional<std::string> error;  // set if the chain aborted

  double acceptance_rate() const {
    if (accepted.empty()) return 0.0;
    return static_cast<double>(std::count(accepted.begin(), accepted.end(), true)) /
           static_cast<double>(accepted.size());
  }
};

struct ProgressRecord {
  int chain;
  int iteration;  // negative during burn-in
  double log_density;
  double acceptance;  // running mean over the current phase
  double step_size;
};
using ProgressCallback = std::function<void(const ProgressRecord&)>;

struct RunOptions {
  bool adapt = true;
  int progress_every = 100;  // 0 disables
  ProgressCallback progress;
};

namespace detail {

/// Steps the chain `count` times, optionally adapting the step size; returns
/// acceptance probabilities and, when asked, visited positions.
template <class Target, class Rng>
PilotStatistics run_window(HMCState& s, HMCSettings& settings, const Target& target, Rng& rng, int count,
                           bool adapt_step, bool keep_positions, int& invalid) {
  PilotStatistics pilot;
  pilot.initial_step = settings.step_size;
  std::optional<DualAveraging> da;
  if (adapt_step) da.emplace(settings.step_size, settings.target_accept);
  for (int i = 0; i < count; ++i) {
    if (da) settings.leaps = std::clamp(static_cast<int>(std::ceil(1.0 / settings.step_size)), 1, settings.max_leaps);
    const StepInfo info = ghmc_step(s, settings, target, rng);
    if (!info.valid) ++invalid;
    pilot.accept_probs.push_back(info.accept_prob);
    if (keep_positions) pilot.positions.push_back(s.position);
    if (da) settings.step_size = da->update(info.accept_prob);
  }
  if (da) settings.step_size = da->averaged();
  return pilot;
}

}  // namespace detail

/// Burn-in (three adaptation windows when enabled: step size at unit mass,
/// mass from the visited positions, step size again) followed by production.
template <class Target>
ChainResult run_chain(const Target& target, std::vector<double> x0, HMCSettings settings, int chain,
                      const RunOptions& options = {}) {
  ChainResult out;
  out.chain = chain;
  out.seed = settings.seed;
  auto rng = chain_rng(settings.seed, chain);
  auto state = make_state(target, std::move(x0));
  if (!state) {
    out.error = "chain " + std::to_string(chain) + " (seed " + std::to_string(settings.seed) +
                "): initial point cannot be evaluated";
    out.settings = settings;
    return out;
  }
  HMCState& s = *state;
  const std::size_t dim = s.position.size();
  if (!settings.mass.empty() && settings.mass.size() != dim) throw InvalidArgument("mass has wrong dimension");

  auto report = [&](int iteration, double acceptance) {
    if (options.progress && options.progress_every > 0 && iteration % options.progress_every == 0) {
      options.progress(ProgressRecord{chain, iteration, s.log_density, acceptance, settings.step_size});
    }
  };

  try {
    int remaining = settings.n_burnin;
    if (options.adapt && settings.n_burnin >= 40) {
      const int w1 = settings.n_burnin / 5;
      const int w3 = settings.n_burnin / 5;
      const int w2 = settings.n_burnin - w1 - w3;
      for (int attempt = 0;; ++attempt) {
        const auto pilot = detail::run_window(s, settings, target, rng, w1, true, false, out.invalid_proposals);
        if (!pilot_is_degenerate(pilot)) break;
        if (attempt == 5) throw IntegrationFailure(0.0, "step-size adaptation: every proposal rejected");
        settings.step_size = pilot.initial_step / 10.0;
      }
      report(-w2 - w3, 0.0);
      for (int attempt = 0;; ++attempt) {
        settings.leaps = std::clamp(static_cast<int>(std::ceil(1.0 / settings.step_size)), 1, settings.max_leaps);
        const auto pilot = detail::run_window(s, settings, target, rng, w2, false, true, out.invalid_proposals);
        if (!pilot_is_degenerate(pilot)) {
          settings.mass = inverse_variances(pilot.positions);
          break;
        }
        if (attempt == 5) throw IntegrationFailure(0.0, "mass adaptation: every proposal rejected");
        settings.step_size /= 10.0;
      }
      report(-w3, 0.0);
      // Momentum scale changes with the mass.
      std::fill(s.momentum.begin(), s.momentum.end(), 0.0);
      for (int attempt = 0;; ++attempt) {
        const auto pilot = detail::run_window(s, settings, target, rng, w3, true, false, out.invalid_proposals);
        if (!pilot_is_degenerate(pilot)) break;
        if (attempt == 5) throw IntegrationFailure(0.0, "step-size adaptation: every proposal rejected");
        settings.step_size = pilot.initial_step / 10.0;
      }
      settings.leaps = std::clamp(static_cast<int>(std::ceil(1.0 / settings.step_size)), 1, settings.max_leaps);
      remaining = 0;
    }
    int accepted_burn = 0;
    for (int i = 0; i < remaining; ++i) {
      const StepInfo info = ghmc_step(s, settings, target, rng);
      if (!info.valid) ++out.invalid_proposals;
      accepted_burn += info.accepted ? 1 : 0;
      report(i - remaining, static_cast<double>(accepted_burn) / (i + 1));
    }

    out.draws.reserve(static_cast<std::size_t>(settings.n_production));
    int accepted = 0;
    for (int i = 0; i < settings.n_production; ++i) {
      const StepInfo info = ghmc_step(s, settings, target, rng);
      if (!info.valid) ++out.invalid_proposals;
      accepted += info.accepted ? 1 : 0;
      out.draws.push_back(s.position);
      out.log_density.push_back(s.log_density);
      out.accepted.push_back(info.accepted);
      out.delta_h.push_back(info.delta_h);
      out.hamiltonian.push_back(-s.log_density + kinetic_energy(s.momentum, settings.mass));
      report(i + 1, static_cast<double>(accepted) / (i + 1));
    }
  } catch (const std::exception& e) {
    out.error = "chain " + std::to_string(chain) + " (seed " + std::to_string(settings.seed) + "): " + e.what();
  }
  out.settings = settings;
  return out;
}

/// Runs chains 0..n_chains-1 on up to `threads` worker threads. Results do
/// not depend on the thread count.
template <class Target, class InitFn>
std::vector<ChainResult> run_chains(const Target& target, InitFn&& initial_point, const HMCSettings& settings,
                                    int threads = 1, const RunOptions& options = {}) {
  settings.validate();
  std::vector<ChainResult> results(static_cast<std::size_t>(settings.n_chains));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int c = next++; c < settings.n_chains; c = next++) {
      try {
        results[static_cast<std::size_t>(c)] = run_chain(target, initial_point(c), settings, c, options);
      } catch (const std::exception& e) {
        auto& r = results[static_cast<std::size_t>(c)];
        r.chain = c;
        r.seed = settings.seed;
        r.settings = settings;
        r.error = "chain " + std::to_string(c) + " (seed " + std::to_string(settings.seed) + "): " + e.what();
      }
    }
  };
  const int n_threads = std::clamp(threads, 1, settings.n_chains);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return results;
}

}  // namespace epihmc
