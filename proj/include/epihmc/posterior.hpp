#pragma once

/// \file
/// Negative Binomial observation model with under-reporting, the prior suite
/// with the random-walk P-spline prior on beta, and the log-posterior with its
/// gradient assembled from forward sensitivities.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "epihmc/compartmental_ode.hpp"
#include "epihmc/params.hpp"
#include "epihmc/priors.hpp"
#include "epihmc/sensitivity.hpp"
#include "epihmc/spline_basis.hpp"

namespace epihmc {

/// Fraction of new infections that get reported, piecewise linear in the day
/// offset and constant outside the breakpoints. No breakpoints means eta = 1.
struct UnderReporting {
  std::vector<std::pair<double, double>> breakpoints;

  void validate() const {
    for (std::size_t i = 0; i < breakpoints.size(); ++i) {
      const auto [day, frac] = breakpoints[i];
      if (!(frac > 0.0 && frac <= 1.0)) {
        throw InvalidArgument("under-reporting fraction must lie in (0, 1], got " + std::to_string(frac));
      }
      if (!std::isfinite(day)) throw InvalidArgument("under-reporting breakpoint day must be finite");
      if (i > 0 && !(day > breakpoints[i - 1].first)) {
        throw InvalidArgument("under-reporting breakpoints must have strictly increasing days");
      }
    }
  }

  bool operator==(const UnderReporting&) const = default;
};

inline double eval_eta(const UnderReporting& u, double t) {
  const auto& bp = u.breakpoints;
  if (bp.empty()) return 1.0;
  if (t <= bp.front().first) return bp.front().second;
  if (t >= bp.back().first) return bp.back().second;
  std::size_t i = 1;
  while (bp[i].first < t) ++i;
  const auto [d0, f0] = bp[i - 1];
  const auto [d1, f1] = bp[i];
  return f0 + (f1 - f0) * (t - d0) / (d1 - d0);
}

/// Observed daily counts for days t0+1, ..., t0+n.
struct IncidenceSeries {
  std::chrono::sys_days start_date{std::chrono::year{2020} / 1 / 1};
  std::vector<std::int64_t> counts;
  UnderReporting eta;

  std::size_t size() const { return counts.size(); }

  /// Counts corrected for under-reporting, C~_j / eta(t0 + j).
  std::vector<double> effective_counts() const {
    std::vector<double> k(counts.size());
    for (std::size_t j = 0; j < counts.size(); ++j) {
      k[j] = static_cast<double>(counts[j]) / eval_eta(eta, static_cast<double>(j + 1));
    }
    return k;
  }

  void validate() const {
    if (counts.empty()) throw DataError("incidence series is empty");
    for (std::size_t j = 0; j < counts.size(); ++j) {
      if (counts[j] < 0) throw DataError("negative count on day " + std::to_string(j + 1));
    }
    eta.validate();
  }
};

/// log of the Negative Binomial pmf with mean C and dispersion phi, with the
/// binomial coefficient written through Gamma functions so k may be real.
inline double neg_binom_logpmf(double k, double mean, double phi) {
  if (!(mean > 0.0)) throw InvalidArgument("negative binomial mean must be positive");
  if (!(phi > 0.0)) throw InvalidArgument("negative binomial dispersion must be positive");
  if (!(k >= 0.0)) throw InvalidArgument("negative binomial count must be non-negative");
  const double tail = -phi * std::log1p(mean / phi) - std::lgamma(k + 1.0);
  if (phi < 1e4) {
    double value = std::lgamma(k + phi) - std::lgamma(phi) + tail;
    if (k > 0.0) value += k * (std::log(mean) - std::log(mean + phi));
    return value;
  }
  // lgamma(k + phi) - lgamma(phi) loses ~eps * phi log phi when taken
  // directly; use the Stirling difference with k log(phi) cancelled.
  const auto stirling = [](double x) {
    const double r = 1.0 / (x * x);
    return (1.0 / 12.0 - r * (1.0 / 360.0 - r / 1260.0)) / x;
  };
  double value = (phi + k - 0.5) * std::log1p(k / phi) - k + stirling(phi + k) - stirling(phi) + tail;
  if (k > 0.0) value += k * (std::log(mean) - std::log1p(mean / phi));
  return value;
}

/// d/dC of neg_binom_logpmf.
inline double neg_binom_dlogpmf_dmean(double k, double mean, double phi) {
  return k / mean - (k + phi) / (mean + phi);
}

/// d/dphi of neg_binom_logpmf.
inline double neg_binom_dlogpmf_dphi(double k, double mean, double phi) {
  return boost::math::digamma(k + phi) - boost::math::digamma(phi) + (mean - k) / (mean + phi) + std::log(phi) -
         std::log(mean + phi);
}

/// Negative Binomial draw with mean C and dispersion phi, as a Gamma-Poisson
/// mixture (variance C + C^2/phi).
template <class Rng>
std::int64_t sample_neg_binom(Rng& rng, double mean, double phi) {
  if (!(mean > 0.0)) return 0;
  std::gamma_distribution<double> gamma(phi, mean / phi);
  const double lambda = gamma(rng);
  if (!(lambda > 0.0)) return 0;
  std::poisson_distribution<std::int64_t> poisson(lambda);
  return poisson(rng);
}

enum class TauPriorTarget { kTauSquared, kTau };

struct PriorConfig {
  Prior alpha = NormalPrior{0.5, 0.05};
  Prior gamma = UniformPrior{0.095, 0.105};
  Prior seed0 = NormalPrior{10.0, 1.0};
  Prior phi_inv = ExponentialPrior{10.0};
  Prior tau = InverseGammaPrior{1.0, 0.005};
  int pspline_order = 2;
  TauPriorTarget tau_target = TauPriorTarget::kTauSquared;

  /// Priors used for the synthetic two-wave benchmark.
  static PriorConfig synthetic_benchmark() { return PriorConfig{}; }

  /// Priors used for the regional COVID-19 study.
  static PriorConfig regional_study() {
    PriorConfig c;
    c.gamma = TruncatedNormalPrior{0.1, 0.015, 1.0 / 30.0, 1.0};
    c.seed0 = NormalPrior{21.88, 7.29};
    return c;
  }

  void validate() const {
    for (const Prior* p : {&alpha, &gamma, &seed0, &phi_inv, &tau}) validate_prior(*p);
    if (pspline_order < 1) throw InvalidArgument("P-spline order must be >= 1");
  }
};

/// Log density and gradient (flat ParamLayout order) of the prior.
struct PriorEvaluation {
  bool in_support = true;
  double value = 0.0;
  std::vector<double> gradient;
};

/// log p(p) = sum of scalar priors
///          - beta' K beta / (2 tau^2) - ((m - q)/2) log(tau^2).
inline PriorEvaluation log_prior(const ModelSpec& spec, const ParamVector& p, const PriorConfig& priors,
                                 const PenaltyMatrix& penalty) {
  const auto layout = ParamLayout::for_spec(spec);
  PriorEvaluation out;
  out.gradient.assign(static_cast<std::size_t>(layout.size), 0.0);

  auto add = [&](const Prior& prior, double x, int slot) {
    const PriorTerm term = evaluate_prior(prior, x);
    if (!term.in_support) {
      out.in_support = false;
      return;
    }
    out.value += term.log_density;
    out.gradient[static_cast<std::size_t>(slot)] += term.derivative;
  };

  if (spec.has_exposed()) add(priors.alpha, p.alpha, layout.alpha);
  add(priors.gamma, p.gamma, layout.gamma);
  add(priors.seed0, p.seed0, layout.seed0);
  add(priors.phi_inv, p.phi_inv, layout.phi_inv);

  const double tau = p.tau;
  if (!(tau > 0.0)) out.in_support = false;
  if (out.in_support) {
    if (priors.tau_target == TauPriorTarget::kTau) {
      add(priors.tau, tau, layout.tau);
    } else {
      // Prior on v = tau^2, carried to tau with the Jacobian 2 tau.
      const PriorTerm term = evaluate_prior(priors.tau, tau * tau);
      if (!term.in_support) {
        out.in_support = false;
      } else {
        out.value += term.log_density + std::log(2.0 * tau);
        out.gradient[static_cast<std::size_t>(layout.tau)] += term.derivative * 2.0 * tau + 1.0 / tau;
      }
    }
  }

  if (!out.in_support) {
    out.value = -std::numeric_limits<double>::infinity();
    std::fill(out.gradient.begin(), out.gradient.end(), 0.0);
    return out;
  }

  const int m = spec.basis_size();
  const int q = penalty.order;
  Eigen::Map<const Eigen::VectorXd> beta(p.beta.data(), m);
  const Eigen::VectorXd kbeta = penalty.entries * beta;
  const double quad = beta.dot(kbeta);
  const double tau2 = tau * tau;
  out.value += -quad / (2.0 * tau2) - 0.5 * (m - q) * std::log(tau2);
  out.gradient[static_cast<std::size_t>(layout.tau)] += quad / (tau2 * tau) - (m - q) / tau;
  for (int i = 0; i < m; ++i) {
    out.gradient[static_cast<std::size_t>(layout.beta + i)] -= kbeta(i) / tau2;
  }
  return out;
}

enum class EvalStatus { kOk, kOutOfSupport, kIntegrationFailed };

struct PosteriorValue {
  EvalStatus status = EvalStatus::kOk;
  double log_posterior = -std::numeric_limits<double>::infinity();
  double log_likelihood = 0.0;
  double log_prior = 0.0;
  std::vector<double> gradient;  // flat ParamLayout order; empty unless requested
  std::string message;

  bool ok() const { return status == EvalStatus::kOk; }
};

struct PosteriorOptions {
  double rtol = 1e-8;
  double atol_scale = 1e-8;        // atol = atol_scale * N
  double incidence_floor = 1e-8;   // persons/day, keeps the pmf defined
  SensitivityOptions sensitivity{};
};

class Posterior {
 public:
  Posterior(ModelSpec spec, IncidenceSeries data, PriorConfig priors, PosteriorOptions options = {})
      : system_(CompartmentalModel(std::move(spec)), options.sensitivity),
        data_(std::move(data)),
        priors_(std::move(priors)),
        options_(options),
        penalty_(penalty_matrix(system_.model().spec().basis_size(), priors_.pspline_order)) {
    data_.validate();
    priors_.validate();
    if (static_cast<int>(data_.size()) != this->spec().horizon) {
      throw InvalidArgument("data has " + std::to_string(data_.size()) + " days but the model horizon is " +
                            std::to_string(this->spec().horizon));
    }
    effective_ = data_.effective_counts();
  }

  const ModelSpec& spec() const { return system_.model().spec(); }
  const CompartmentalModel& model() const { return system_.model(); }
  const SensitivitySystem& sensitivity_system() const { return system_; }
  const IncidenceSeries& data() const { return data_; }
  const PriorConfig& priors() const { return priors_; }
  const PenaltyMatrix& penalty() const { return penalty_; }
  const PosteriorOptions& options() const { return options_; }
  Tolerances tolerances() const { return Tolerances::for_population(spec().N, options_.rtol, options_.atol_scale); }

  /// Likelihood of the data given model incidence; throws on a non-positive
  /// mean with the offending day.
  double log_likelihood(std::span<const double> incidence, double phi) const {
    double total = 0.0;
    for (std::size_t j = 0; j < effective_.size(); ++j) {
      try {
        total += neg_binom_logpmf(effective_[j], incidence[j], phi);
      } catch (const InvalidArgument& e) {
        throw InvalidArgument("day " + std::to_string(j + 1) + ": " + e.what());
      }
    }
    return total;
  }

  PosteriorValue evaluate(const ParamVector& p, bool with_gradient = true) const {
    PosteriorValue out;
    const ModelSpec& s = spec();
    if (!is_feasible(s, p)) {
      out.status = EvalStatus::kOutOfSupport;
      out.message = "parameters outside the feasible region";
      return out;
    }
    const PriorEvaluation prior = log_prior(s, p, priors_, penalty_);
    if (!prior.in_support) {
      out.status = EvalStatus::kOutOfSupport;
      out.message = "parameters outside the prior support";
      return out;
    }

    const double phi = p.phi();
    const auto c_index = static_cast<std::size_t>(s.index_c());
    const std::size_t n = effective_.size();
    std::vector<double> incidence(n);
    std::vector<bool> floored(n, false);

    auto fill_incidence = [&](auto&& counter_at) {
      for (std::size_t j = 0; j < n; ++j) {
        const double d = counter_at(j + 1) - counter_at(j);
        if (d > options_.incidence_floor) {
          incidence[j] = d;
        } else {
          incidence[j] = options_.incidence_floor;
          floored[j] = true;
        }
      }
    };

    try {
      if (!with_gradient) {
        const Trajectory traj = model().integrate(p, tolerances());
        fill_incidence([&](std::size_t j) { return traj.state(j)[c_index]; });
        out.log_likelihood = log_likelihood(incidence, phi);
      } else {
        const ExtendedTrajectory ext = system_.integrate_extended(p, tolerances());
        fill_incidence([&](std::size_t j) { return ext.states().state(j)[c_index]; });
        out.log_likelihood = log_likelihood(incidence, phi);

        const auto layout = ParamLayout::for_spec(s);
        const DynamicLayout dyn = system_.layout();
        out.gradient = prior.gradient;
        double dphi = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double k = effective_[j];
          dphi += neg_binom_dlogpmf_dphi(k, incidence[j], phi);
          if (floored[j]) continue;
          const double dmean = neg_binom_dlogpmf_dmean(k, incidence[j], phi);
          for (int c = 0; c < dyn.size; ++c) {
            const double dc = ext.sensitivity(j + 1, s.index_c(), c) - ext.sensitivity(j, s.index_c(), c);
            out.gradient[static_cast<std::size_t>(dyn.to_param_index(s, c))] += dmean * dc;
          }
        }
        // dphi/dphi_inv = -phi^2
        out.gradient[static_cast<std::size_t>(layout.phi_inv)] += -phi * phi * dphi;
      }
    } catch (const IntegrationFailure& e) {
      out.status = EvalStatus::kIntegrationFailed;
      out.message = e.what();
      out.gradient.clear();
      return out;
    }

    out.log_prior = prior.value;
    out.log_posterior = out.log_likelihood + out.log_prior;
    if (!std::isfinite(out.log_posterior)) {
      out.status = EvalStatus::kIntegrationFailed;
      out.message = "non-finite log posterior";
      out.gradient.clear();
    }
    return out;
  }

 private:
  SensitivitySystem system_;
  IncidenceSeries data_;
  PriorConfig priors_;
  PosteriorOptions options_;
  PenaltyMatrix penalty_;
  std::vector<double> effective_;
};

/// Maps an unconstrained coordinate to a parameter's support.
struct Transform {
  enum class Kind { kIdentity, kLog, kLogit };
  Kind kind = Kind::kIdentity;
  double lower = 0.0;
  double upper = 1.0;

  double to_natural(double theta) const {
    switch (kind) {
      case Kind::kLog:
        return std::exp(theta);
      case Kind::kLogit:
        return lower + (upper - lower) / (1.0 + std::exp(-theta));
      default:
        return theta;
    }
  }

  double to_unconstrained(double x) const {
    switch (kind) {
      case Kind::kLog:
        return std::log(x);
      case Kind::kLogit: {
        const double u = (x - lower) / (upper - lower);
        return std::log(u) - std::log1p(-u);
      }
      default:
        return x;
    }
  }

  /// d natural / d theta
  double jacobian(double theta) const {
    switch (kind) {
      case Kind::kLog:
        return std::exp(theta);
      case Kind::kLogit: {
        const double e = std::exp(-std::abs(theta));
        return (upper - lower) * e / ((1.0 + e) * (1.0 + e));
      }
      default:
        return 1.0;
    }
  }

  double log_jacobian(double theta) const {
    switch (kind) {
      case Kind::kLog:
        return theta;
      case Kind::kLogit:
        // log(s) + log(1 - s) = -softplus(-theta) - softplus(theta)
        return std::log(upper - lower) - softplus(-theta) - softplus(theta);
      default:
        return 0.0;
    }
  }

  double d_log_jacobian(double theta) const {
    switch (kind) {
      case Kind::kLog:
        return 1.0;
      case Kind::kLogit:
        return 1.0 - 2.0 / (1.0 + std::exp(-theta));
      default:
        return 0.0;
    }
  }

 private:
  static double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
};

/// The posterior seen by the sampler: positive parameters on the log scale,
/// bounded-prior parameters on the logit scale, with the log-Jacobian added.
class UnconstrainedPosterior {
 public:
  explicit UnconstrainedPosterior(const Posterior& posterior) : posterior_(&posterior) {
    const ModelSpec& s = posterior.spec();
    const auto layout = ParamLayout::for_spec(s);
    transforms_.assign(static_cast<std::size_t>(layout.size), Transform{});
    auto choose = [](const Prior& prior) {
      const Support sup = prior_support(prior);
      if (sup.bounded()) return Transform{Transform::Kind::kLogit, sup.lower, sup.upper};
      return Transform{Transform::Kind::kLog, 0.0, 1.0};
    };
    const PriorConfig& pc = posterior.priors();
    if (layout.alpha >= 0) transforms_[static_cast<std::size_t>(layout.alpha)] = choose(pc.alpha);
    transforms_[static_cast<std::size_t>(layout.gamma)] = choose(pc.gamma);
    transforms_[static_cast<std::size_t>(layout.seed0)] = choose(pc.seed0);
    transforms_[static_cast<std::size_t>(layout.phi_inv)] = choose(pc.phi_inv);
    transforms_[static_cast<std::size_t>(layout.tau)] = Transform{Transform::Kind::kLog, 0.0, 1.0};
  }

  const Posterior& posterior() const { return *posterior_; }
  std::size_t dimension() const { return transforms_.size(); }
  const std::vector<Transform>& transforms() const { return transforms_; }

  ParamVector to_natural(std::span<const double> theta) const {
    std::vector<double> flat(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) flat[i] = transforms_[i].to_natural(theta[i]);
    return unflatten(posterior_->spec(), flat);
  }

  std::vector<double> to_unconstrained(const ParamVector& p) const {
    std::vector<double> flat = flatten(posterior_->spec(), p);
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = transforms_[i].to_unconstrained(flat[i]);
    return flat;
  }

  /// Log density in theta-space; fills `grad` when non-empty. Returns nullopt
  /// for out-of-support points and failed integrations.
  std::optional<double> operator()(std::span<const double> theta, std::span<double> grad) const {
    for (double v : theta) {
      if (!std::isfinite(v)) return std::nullopt;
    }
    const ParamVector p = to_natural(theta);
    const PosteriorValue value = posterior_->evaluate(p, !grad.empty());
    if (!value.ok()) return std::nullopt;
    double log_density = value.log_posterior;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      log_density += transforms_[i].log_jacobian(theta[i]);
      if (!grad.empty()) {
        grad[i] = value.gradient[i] * transforms_[i].jacobian(theta[i]) + transforms_[i].d_log_jacobian(theta[i]);
      }
    }
    if (!std::isfinite(log_density)) return std::nullopt;
    return log_density;
  }

 private:
  const Posterior* posterior_;
  std::vector<Transform> transforms_;
};

}  // namespace epihmc
