#pragma once

/// \file
/// Forward sensitivities s_c(t) = dy(t)/dp_c for the parameters that enter
/// the ODE, integrated jointly with the state:
///   s_c' = (df/dy) s_c + df/dp_c,   s_seed(t0) = (-1, 1, 0, ..., 0, 1).
/// Columns for phi_inv and tau are identically zero and are not stored.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "epihmc/compartmental_ode.hpp"

namespace epihmc {

/// Column of each ODE parameter in the sensitivity matrix.
/// SEMIKR: (alpha, gamma, E0, beta_1..beta_m); SIKR: (gamma, I0, beta_1..beta_m).
struct DynamicLayout {
  int alpha = -1;
  int gamma = 0;
  int seed0 = 1;
  int beta = 2;
  int size = 2;

  static DynamicLayout for_spec(const ModelSpec& spec) {
    DynamicLayout l;
    const int shift = spec.has_exposed() ? 1 : 0;
    l.alpha = spec.has_exposed() ? 0 : -1;
    l.gamma = shift;
    l.seed0 = shift + 1;
    l.beta = shift + 2;
    l.size = l.beta + spec.basis_size();
    return l;
  }

  /// Slot of dynamic column c in the full ParamLayout vector.
  int to_param_index(const ModelSpec& spec, int c) const {
    const auto pl = ParamLayout::for_spec(spec);
    if (c == alpha) return pl.alpha;
    if (c == gamma) return pl.gamma;
    if (c == seed0) return pl.seed0;
    return pl.beta + (c - beta);
  }
};

struct SensitivityOptions {
  /// Multiplies the transmission coupling in df/dy. Nonzero values are only
  /// meant for negative-control tests of gradient checking.
  double jacobian_perturbation = 0.0;
};

/// State trajectory plus the (dim x n_dyn) sensitivity matrix on the daily grid.
class ExtendedTrajectory {
 public:
  ExtendedTrajectory() = default;
  ExtendedTrajectory(Trajectory states, int n_dyn)
      : states_(std::move(states)), n_dyn_(n_dyn),
        sens_(states_.size() * static_cast<std::size_t>(states_.dim() * n_dyn), 0.0) {}

  const Trajectory& states() const { return states_; }
  Trajectory& states() { return states_; }
  int dynamic_count() const { return n_dyn_; }

  /// ds_row/dp_c at grid point j.
  double sensitivity(std::size_t j, int row, int c) const { return sens_[offset(j, c) + static_cast<std::size_t>(row)]; }
  /// Column c at grid point j, length dim.
  std::span<const double> column(std::size_t j, int c) const {
    return {sens_.data() + offset(j, c), static_cast<std::size_t>(states_.dim())};
  }
  std::span<double> block(std::size_t j) {
    return {sens_.data() + offset(j, 0), static_cast<std::size_t>(states_.dim() * n_dyn_)};
  }

 private:
  std::size_t offset(std::size_t j, int c) const {
    return (j * static_cast<std::size_t>(n_dyn_) + static_cast<std::size_t>(c)) * static_cast<std::size_t>(states_.dim());
  }

  Trajectory states_;
  int n_dyn_ = 0;
  std::vector<double> sens_;
};

class SensitivitySystem {
 public:
  explicit SensitivitySystem(CompartmentalModel model, SensitivityOptions options = {})
      : model_(std::move(model)), layout_(DynamicLayout::for_spec(model_.spec())), options_(options) {}

  const CompartmentalModel& model() const { return model_; }
  const DynamicLayout& layout() const { return layout_; }

  /// (df/dy) v, exploiting the chain structure.
  void apply_jacobian_state(double rate, std::span<const double> y, const ParamVector& p,
                            std::span<const double> v, std::span<double> out) const {
    const ModelSpec& spec = model_.spec();
    const int me = spec.exposed_stages();
    const int k = spec.K;
    double infectious = 0.0;
    double v_infectious = 0.0;
    for (int j = 0; j < k; ++j) {
      const auto idx = static_cast<std::size_t>(spec.index_i(j));
      infectious += y[idx];
      v_infectious += v[idx];
    }
    const double dflux =
        (1.0 + options_.jacobian_perturbation) * rate / spec.N * (infectious * v[0] + y[0] * v_infectious);

    out[0] = -dflux;
    double inflow = dflux;
    if (me > 0) {
      const double r = me * p.alpha;
      for (int i = 0; i < me; ++i) {
        const auto idx = static_cast<std::size_t>(spec.index_e(i));
        out[idx] = inflow - r * v[idx];
        inflow = r * v[idx];
      }
    }
    const double g = k * p.gamma;
    for (int j = 0; j < k; ++j) {
      const auto idx = static_cast<std::size_t>(spec.index_i(j));
      out[idx] = inflow - g * v[idx];
      inflow = g * v[idx];
    }
    out[static_cast<std::size_t>(spec.index_r())] = inflow;
    out[static_cast<std::size_t>(spec.index_c())] = dflux;
  }

  /// Adds df/dp_c into `out` (which the caller has initialised).
  void add_param_column(const TransmissionAt& tr, std::span<const double> y, int c,
                        std::span<double> out) const {
    const ModelSpec& spec = model_.spec();
    const int me = spec.exposed_stages();
    const int k = spec.K;
    if (c == layout_.alpha) {
      double prev = 0.0;
      for (int i = 0; i < me; ++i) {
        const auto idx = static_cast<std::size_t>(spec.index_e(i));
        out[idx] += me * (prev - y[idx]);
        prev = y[idx];
      }
      out[static_cast<std::size_t>(spec.index_i(0))] += me * prev;
    } else if (c == layout_.gamma) {
      double prev = 0.0;
      for (int j = 0; j < k; ++j) {
        const auto idx = static_cast<std::size_t>(spec.index_i(j));
        out[idx] += k * (prev - y[idx]);
        prev = y[idx];
      }
      out[static_cast<std::size_t>(spec.index_r())] += k * prev;
    } else if (c >= layout_.beta) {
      const int b = c - layout_.beta;
      if (b < tr.first || b > tr.first + static_cast<int>(tr.basis.size()) - 1) return;
      double infectious = 0.0;
      for (int j = 0; j < k; ++j) infectious += y[static_cast<std::size_t>(spec.index_i(j))];
      const double d = tr.rate * tr.basis[static_cast<std::size_t>(b - tr.first)] * y[0] * infectious / spec.N;
      out[0] -= d;
      out[1] += d;  // E_1 or I_1
      out[static_cast<std::size_t>(spec.index_c())] += d;
    }
    // The seed enters only through the initial condition.
  }

  Eigen::MatrixXd jacobian_state(double t, std::span<const double> y, const ParamVector& p) const {
    const int dim = model_.spec().state_dim();
    const double rate = model_.transmission_rate(t, p.beta);
    Eigen::MatrixXd jac(dim, dim);
    std::vector<double> unit(static_cast<std::size_t>(dim), 0.0);
    std::vector<double> col(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i) {
      unit[static_cast<std::size_t>(i)] = 1.0;
      apply_jacobian_state(rate, y, p, unit, col);
      unit[static_cast<std::size_t>(i)] = 0.0;
      for (int r = 0; r < dim; ++r) jac(r, i) = col[static_cast<std::size_t>(r)];
    }
    check_finite(t, jac);
    return jac;
  }

  Eigen::MatrixXd jacobian_params(double t, std::span<const double> y, const ParamVector& p) const {
    const int dim = model_.spec().state_dim();
    TransmissionAt tr;
    model_.transmission(t, p.beta, tr);
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(dim, layout_.size);
    std::vector<double> col(static_cast<std::size_t>(dim));
    for (int c = 0; c < layout_.size; ++c) {
      std::fill(col.begin(), col.end(), 0.0);
      add_param_column(tr, y, c, col);
      for (int r = 0; r < dim; ++r) jac(r, c) = col[static_cast<std::size_t>(r)];
    }
    check_finite(t, jac);
    return jac;
  }

  /// Initial sensitivity matrix: the seed pattern in the seed column.
  void initial_sensitivities(std::span<double> block) const {
    std::fill(block.begin(), block.end(), 0.0);
    const ModelSpec& spec = model_.spec();
    const auto off = static_cast<std::size_t>(layout_.seed0 * spec.state_dim());
    block[off + 0] = -1.0;
    block[off + 1] = 1.0;
    block[off + static_cast<std::size_t>(spec.index_c())] = 1.0;
  }

  ExtendedTrajectory integrate_extended(const ParamVector& p, const Tolerances& tol) const {
    model_.check_params(p);
    const ModelSpec& spec = model_.spec();
    const int dim = spec.state_dim();
    const auto udim = static_cast<std::size_t>(dim);
    const int n_dyn = layout_.size;

    std::vector<double> z(udim * static_cast<std::size_t>(1 + n_dyn));
    const auto y0 = model_.initial_state(p.seed0);
    std::copy(y0.begin(), y0.end(), z.begin());
    initial_sensitivities(std::span<double>(z).subspan(udim));

    ExtendedTrajectory ext(Trajectory(model_.daily_grid(), dim, spec.N), n_dyn);
    TransmissionAt tr;
    auto f = [&](double t, std::span<const double> state, std::span<double> dz) {
      model_.transmission(t, p.beta, tr);
      const auto y = state.first(udim);
      model_.rhs_with_rate(tr.rate, y, p, dz.first(udim));
      for (int c = 0; c < n_dyn; ++c) {
        const auto off = udim * static_cast<std::size_t>(1 + c);
        auto out = dz.subspan(off, udim);
        apply_jacobian_state(tr.rate, y, p, state.subspan(off, udim), out);
        add_param_column(tr, y, c, out);
      }
    };
    integrate_dopri5(f, spec.t0(), std::span<double>(z), ext.states().times(), tol,
                     [&](std::size_t j, double, std::span<const double> state) {
                       std::copy(state.begin(), state.begin() + dim, ext.states().state(j).begin());
                       std::copy(state.begin() + dim, state.end(), ext.block(j).begin());
                     });
    return ext;
  }

  ExtendedTrajectory integrate_extended(const ParamVector& p) const {
    return integrate_extended(p, Tolerances::for_population(model_.spec().N));
  }

 private:
  static void check_finite(double t, const Eigen::MatrixXd& m) {
    if (!m.allFinite()) throw IntegrationFailure(t, "non-finite Jacobian entry");
  }

  CompartmentalModel model_;
  DynamicLayout layout_;
  SensitivityOptions options_;
};

}  // namespace epihmc
