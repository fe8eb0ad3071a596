#pragma once

/// \file
/// Convergence diagnostics (R-hat, ESS), pointwise posterior summaries of
/// beta(t) and R0(t), and posterior predictive bands for reported counts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "epihmc/compartmental_ode.hpp"
#include "epihmc/errors.hpp"
#include "epihmc/params.hpp"
#include "epihmc/posterior.hpp"

namespace epihmc {

struct RhatResult {
  double value = std::numeric_limits<double>::quiet_NaN();
  bool degenerate = false;  // zero within-chain variance
};

/// sqrt(((n-1)/n W + B/n) / W) over equal-length chains.
inline RhatResult gelman_rubin(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw InvalidArgument("R-hat needs at least two chains");
  const std::size_t n = chains.front().size();
  if (n < 2) throw InvalidArgument("R-hat needs at least two draws per chain");
  for (const auto& c : chains) {
    if (c.size() != n) throw InvalidArgument("R-hat needs chains of equal length");
  }
  const double m = static_cast<double>(chains.size());
  const double nd = static_cast<double>(n);
  std::vector<double> means;
  double grand = 0.0;
  double w = 0.0;
  for (const auto& c : chains) {
    double mean = 0.0;
    for (double x : c) mean += x;
    mean /= nd;
    double var = 0.0;
    for (double x : c) var += (x - mean) * (x - mean);
    w += var / (nd - 1.0);
    means.push_back(mean);
    grand += mean;
  }
  w /= m;
  grand /= m;
  double b = 0.0;
  for (double mean : means) b += (mean - grand) * (mean - grand);
  b *= nd / (m - 1.0);

  RhatResult r;
  if (!(w > 0.0)) {
    r.degenerate = true;
    return r;
  }
  r.value = std::sqrt(((nd - 1.0) / nd * w + b / nd) / w);
  return r;
}

/// R-hat after splitting every chain into its first and second half.
inline RhatResult split_gelman_rubin(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> halves;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    if (half < 2) throw InvalidArgument("split R-hat needs at least four draws per chain");
    halves.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    halves.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return gelman_rubin(halves);
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence.
/// Returns 0 when all draws are identical.
inline double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  if (chains.empty() || chains.front().size() < 4) return 0.0;
  const std::size_t n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) throw InvalidArgument("ESS needs chains of equal length");
  }
  const double m = static_cast<double>(chains.size());
  const double nd = static_cast<double>(n);

  std::vector<double> means;
  for (const auto& c : chains) {
    double s = 0.0;
    for (double x : c) s += x;
    means.push_back(s / nd);
  }
  auto mean_autocov = [&](std::size_t lag) {
    double total = 0.0;
    for (std::size_t k = 0; k < chains.size(); ++k) {
      const auto& c = chains[k];
      double acc = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i) acc += (c[i] - means[k]) * (c[i + lag] - means[k]);
      total += acc / nd;
    }
    return total / m;
  };

  const double acov0 = mean_autocov(0);
  const double w = acov0 * nd / (nd - 1.0);
  double grand = 0.0;
  for (double mu : means) grand += mu;
  grand /= m;
  double b = 0.0;
  if (chains.size() > 1) {
    for (double mu : means) b += (mu - grand) * (mu - grand);
    b *= nd / (m - 1.0);
  }
  const double var_plus = (nd - 1.0) / nd * w + b / nd;
  if (!(var_plus > 0.0)) return 0.0;

  auto rho = [&](std::size_t lag) { return 1.0 - (w - mean_autocov(lag)) / var_plus; };
  double sum_pairs = 0.0;
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    double pair = (t == 0 ? 1.0 : rho(t)) + rho(t + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, previous);
    previous = pair;
    sum_pairs += pair;
  }
  const double tau = std::max(-1.0 + 2.0 * sum_pairs, 1.0 / std::log10(m * nd));
  return m * nd / tau;
}

/// Sample quantile with linear interpolation between order statistics
/// (h = (n-1) p).
inline double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw InvalidArgument("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("correlation needs two equal-length series");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

/// Pointwise median and central 95% interval.
struct SummaryTable {
  std::vector<double> times;
  std::vector<double> lower;
  std::vector<double> median;
  std::vector<double> upper;

  std::size_t size() const { return times.size(); }
};

namespace detail {

/// rows[t][draw] -> table
inline SummaryTable summarize_rows(std::vector<double> times, const std::vector<std::vector<double>>& rows) {
  SummaryTable table;
  table.times = std::move(times);
  for (const auto& r : rows) {
    table.lower.push_back(quantile(r, 0.025));
    table.median.push_back(quantile(r, 0.5));
    table.upper.push_back(quantile(r, 0.975));
  }
  return table;
}

}  // namespace detail

struct BetaR0Summary {
  SummaryTable beta;
  SummaryTable r0;
};

/// beta(t) = exp(sum beta_i B_i(t)) and R0(t) = beta(t)/gamma on the daily
/// grid; the ratio is formed per draw before taking quantiles.
inline BetaR0Summary summarize_beta_r0(const ModelSpec& spec, std::span<const ParamVector> draws) {
  if (draws.empty()) throw InvalidArgument("no draws to summarise");
  const CompartmentalModel model(spec);
  const auto grid = model.daily_grid();
  std::vector<std::vector<double>> beta_rows(grid.size()), r0_rows(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    beta_rows[j].reserve(draws.size());
    r0_rows[j].reserve(draws.size());
    for (const auto& p : draws) {
      const double b = model.transmission_rate(grid[j], p.beta);
      beta_rows[j].push_back(b);
      r0_rows[j].push_back(b / p.gamma);
    }
  }
  return {detail::summarize_rows(grid, beta_rows), detail::summarize_rows(grid, r0_rows)};
}

struct PredictiveSummary {
  SummaryTable counts;  // simulated reported counts on days 1..n
  int failures = 0;     // draws whose integration failed
};

/// One simulated reported series per draw, eta(t) * NegBinom(C(t), phi).
inline PredictiveSummary posterior_predictive(const ModelSpec& spec, std::span<const ParamVector> draws,
                                              const IncidenceSeries& data, std::uint64_t seed,
                                              const Tolerances& tol) {
  const CompartmentalModel model(spec);
  const auto n = static_cast<std::size_t>(spec.horizon);
  std::vector<std::vector<double>> rows(n);
  std::vector<double> eta(n);
  for (std::size_t j = 0; j < n; ++j) eta[j] = eval_eta(data.eta, static_cast<double>(j + 1));
  std::mt19937_64 rng(seed);
  PredictiveSummary out;
  for (const auto& p : draws) {
    DailyIncidence inc;
    try {
      inc = daily_incidence(model, model.integrate(p, tol));
    } catch (const IntegrationFailure&) {
      ++out.failures;
      continue;
    }
    const double phi = p.phi();
    for (std::size_t j = 0; j < n; ++j) {
      rows[j].push_back(eta[j] * static_cast<double>(sample_neg_binom(rng, inc.values[j], phi)));
    }
  }
  std::vector<double> days(n);
  for (std::size_t j = 0; j < n; ++j) days[j] = static_cast<double>(j + 1);
  if (rows.front().empty()) {
    out.counts.times = days;
    return out;
  }
  out.counts = detail::summarize_rows(days, rows);
  return out;
}

/// Fraction of observed counts inside the predictive band.
inline double band_coverage(const SummaryTable& band, std::span<const std::int64_t> observed) {
  if (band.size() != observed.size() || observed.empty()) throw InvalidArgument("band and data lengths differ");
  std::size_t inside = 0;
  for (std::size_t j = 0; j < observed.size(); ++j) {
    const auto y = static_cast<double>(observed[j]);
    if (y >= band.lower[j] && y <= band.upper[j]) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(observed.size());
}

}  // namespace epihmc
