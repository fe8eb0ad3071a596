#pragma once

/// \file
/// SE_M I_K R and SI_K R dynamics with a spline transmission rate
/// log beta(t) = sum_i beta_i B_i(t), plus the cumulative-infection counter C_I.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "epihmc/errors.hpp"
#include "epihmc/model_spec.hpp"
#include "epihmc/params.hpp"
#include "epihmc/runge_kutta.hpp"
#include "epihmc/spline_basis.hpp"

namespace epihmc {

/// States on the daily grid t0, t0 + 1, ..., t0 + horizon; row-major storage.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(std::vector<double> times, int dim, double population)
      : times_(std::move(times)), dim_(dim), population_(population),
        data_(times_.size() * static_cast<std::size_t>(dim), 0.0) {}

  std::size_t size() const { return times_.size(); }
  int dim() const { return dim_; }
  double population() const { return population_; }
  const std::vector<double>& times() const { return times_; }

  std::span<const double> state(std::size_t j) const {
    return {data_.data() + j * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  std::span<double> state(std::size_t j) {
    return {data_.data() + j * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }

 private:
  std::vector<double> times_;
  int dim_ = 0;
  double population_ = 0.0;
  std::vector<double> data_;
};

/// Evaluation of beta(t) with the basis window that produced it.
struct TransmissionAt {
  double rate = 0.0;
  int first = 0;               // index of the first nonzero basis function
  std::vector<double> basis;   // d+1 nonzero basis values
};

/// A ModelSpec with its knot vector precomputed. Cheap to copy.
class CompartmentalModel {
 public:
  explicit CompartmentalModel(ModelSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    knots_ = make_knots(spec_.spline);
  }

  const ModelSpec& spec() const { return spec_; }
  const KnotVector& knots() const { return knots_; }

  std::vector<double> daily_grid() const {
    std::vector<double> grid(static_cast<std::size_t>(spec_.horizon + 1));
    for (int j = 0; j <= spec_.horizon; ++j) grid[static_cast<std::size_t>(j)] = spec_.t0() + j;
    return grid;
  }

  /// beta(t); throws IntegrationFailure if exp overflows.
  void transmission(double t, std::span<const double> beta, TransmissionAt& out) const {
    out.basis.resize(static_cast<std::size_t>(knots_.degree() + 1));
    out.first = eval_basis_nonzero(knots_, t, out.basis);
    double log_rate = 0.0;
    for (std::size_t k = 0; k < out.basis.size(); ++k) {
      log_rate += beta[static_cast<std::size_t>(out.first) + k] * out.basis[k];
    }
    out.rate = std::exp(log_rate);
    if (!std::isfinite(out.rate)) {
      throw IntegrationFailure(t, "transmission rate overflow from coefficients beta_" +
                                      std::to_string(out.first + 1) + "..beta_" +
                                      std::to_string(out.first + knots_.degree() + 1));
    }
  }

  double transmission_rate(double t, std::span<const double> beta) const {
    TransmissionAt tr;
    transmission(t, beta, tr);
    return tr.rate;
  }

  /// f(t, y, p) given beta(t) already evaluated.
  void rhs_with_rate(double rate, std::span<const double> y, const ParamVector& p, std::span<double> dy) const {
    const int me = spec_.exposed_stages();
    const int k = spec_.K;
    const double n = spec_.N;
    double infectious = 0.0;
    for (int j = 0; j < k; ++j) infectious += y[static_cast<std::size_t>(spec_.index_i(j))];
    const double flux = rate * y[0] * infectious / n;

    dy[0] = -flux;
    double inflow = flux;
    if (me > 0) {
      const double r = me * p.alpha;
      for (int i = 0; i < me; ++i) {
        const auto idx = static_cast<std::size_t>(spec_.index_e(i));
        dy[idx] = inflow - r * y[idx];
        inflow = r * y[idx];
      }
    }
    const double g = k * p.gamma;
    for (int j = 0; j < k; ++j) {
      const auto idx = static_cast<std::size_t>(spec_.index_i(j));
      dy[idx] = inflow - g * y[idx];
      inflow = g * y[idx];
    }
    dy[static_cast<std::size_t>(spec_.index_r())] = inflow;
    dy[static_cast<std::size_t>(spec_.index_c())] = flux;
  }

  void rhs(double t, std::span<const double> y, const ParamVector& p, std::span<double> dy) const {
    TransmissionAt tr;
    transmission(t, p.beta, tr);
    rhs_with_rate(tr.rate, y, p, dy);
  }

  std::vector<double> initial_state(double seed0) const {
    if (!(seed0 > 0.0 && seed0 < spec_.N)) {
      throw InvalidArgument("initial seed must lie in (0, N), got " + std::to_string(seed0));
    }
    std::vector<double> y(static_cast<std::size_t>(spec_.state_dim()), 0.0);
    y[0] = spec_.N - seed0;
    y[1] = seed0;  // E_1 for SEMIKR, I_1 for SIKR
    y[static_cast<std::size_t>(spec_.index_c())] = seed0;
    return y;
  }

  Trajectory integrate(const ParamVector& p, const Tolerances& tol) const {
    check_params(p);
    std::vector<double> y = initial_state(p.seed0);
    Trajectory traj(daily_grid(), spec_.state_dim(), spec_.N);
    TransmissionAt tr;
    auto f = [&](double t, std::span<const double> state, std::span<double> dy) {
      transmission(t, p.beta, tr);
      rhs_with_rate(tr.rate, state, p, dy);
    };
    integrate_dopri5(f, spec_.t0(), std::span<double>(y), traj.times(), tol,
                     [&](std::size_t j, double, std::span<const double> state) {
                       std::copy(state.begin(), state.end(), traj.state(j).begin());
                     });
    return traj;
  }

  Trajectory integrate(const ParamVector& p) const {
    return integrate(p, Tolerances::for_population(spec_.N));
  }

  void check_params(const ParamVector& p) const {
    if (static_cast<int>(p.beta.size()) != spec_.basis_size()) {
      throw InvalidArgument("beta has wrong length for this model");
    }
    if (spec_.has_exposed() && !(p.alpha > 0.0)) throw InvalidArgument("alpha must be positive");
    if (!(p.gamma > 0.0)) throw InvalidArgument("gamma must be positive");
  }

 private:
  ModelSpec spec_;
  KnotVector knots_;
};

/// Daily first differences of C_I, clamped at zero.
struct DailyIncidence {
  std::vector<double> values;
  int clamped = 0;       // negative differences set to zero
  int large_negative = 0;  // of those, how many exceeded 1e-9 N in magnitude
};

inline DailyIncidence daily_incidence(const Trajectory& traj, int counter_index) {
  DailyIncidence inc;
  if (traj.size() < 2) return inc;
  inc.values.resize(traj.size() - 1);
  const double noise = 1e-9 * traj.population();
  const auto c = static_cast<std::size_t>(counter_index);
  for (std::size_t j = 1; j < traj.size(); ++j) {
    double d = traj.state(j)[c] - traj.state(j - 1)[c];
    if (d < 0.0) {
      ++inc.clamped;
      if (d < -noise) ++inc.large_negative;
      d = 0.0;
    }
    inc.values[j - 1] = d;
  }
  return inc;
}

inline DailyIncidence daily_incidence(const CompartmentalModel& model, const Trajectory& traj) {
  return daily_incidence(traj, model.spec().index_c());
}

/// Erlang(stages, stages * rate) density: the dwell-time law of a chain of
/// `stages` exponential compartments each left at rate stages * rate.
inline double erlang_exit_flux(int stages, double rate, double t) {
  if (stages < 1) throw InvalidArgument("stages must be >= 1");
  if (!(rate > 0.0)) throw InvalidArgument("rate must be positive");
  if (!(t >= 0.0)) throw InvalidArgument("time must be non-negative");
  const double lambda = stages * rate;
  if (t == 0.0) return stages == 1 ? lambda : 0.0;
  const double log_density =
      stages * std::log(lambda) + (stages - 1) * std::log(t) - lambda * t - std::lgamma(stages);
  return std::exp(log_density);
}

}  // namespace epihmc
