#pragma once

/// \file
/// Embedded Dormand-Prince 5(4) integrator with adaptive step control. Output
/// times are hit exactly: a step that would cross the next output time is
/// shortened to land on it.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "epihmc/errors.hpp"

namespace epihmc {

struct Tolerances {
  double rtol = 1e-8;
  double atol = 1e-8;

  /// Defaults used for population models: atol proportional to N.
  static Tolerances for_population(double n, double rtol = 1e-8, double atol_scale = 1e-8) {
    return Tolerances{rtol, atol_scale * n};
  }
};

struct SolverStats {
  long accepted = 0;
  long rejected = 0;
  long rhs_evals = 0;
};

namespace detail {

struct DormandPrinceTableau {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // Difference between 5th and embedded 4th order weights.
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace detail

/// Integrates y' = f(t, y) from t0 through every time in `output_times`
/// (non-decreasing, all >= t0), calling observer(index, t, y) at each.
/// `y` holds the initial state on entry and the final state on exit.
///
/// Rhs: void(double t, std::span<const double> y, std::span<double> dy)
template <class Rhs, class Observer>
SolverStats integrate_dopri5(Rhs&& f, double t0, std::span<double> y, std::span<const double> output_times,
                             const Tolerances& tol, Observer&& observer, long max_steps = 1'000'000) {
  using T = detail::DormandPrinceTableau;
  const std::size_t n = y.size();
  std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n);
  SolverStats stats;

  auto scale = [&](double a, double b) {
    return tol.atol + tol.rtol * std::max(std::abs(a), std::abs(b));
  };

  double t = t0;
  f(t, std::span<const double>(y.data(), n), std::span<double>(k1));
  ++stats.rhs_evals;
  if (!detail::all_finite(k1)) throw IntegrationFailure(t, "non-finite derivative at initial state");

  // Initial step (Hairer, Norsett & Wanner II.4).
  double h;
  {
    double d0 = 0.0, d1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sc = scale(y[i], y[i]);
      d0 += (y[i] / sc) * (y[i] / sc);
      d1 += (k1[i] / sc) * (k1[i] / sc);
    }
    d0 = std::sqrt(d0 / static_cast<double>(n));
    d1 = std::sqrt(d1 / static_cast<double>(n));
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    // Trial evaluations must stay inside the integration interval.
    const double span = output_times.empty() ? 0.0 : output_times.back() - t0;
    if (span > 0.0) h0 = std::min(h0, span);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h0 * k1[i];
    f(t + h0, std::span<const double>(ytmp), std::span<double>(k2));
    ++stats.rhs_evals;
    double d2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sc = scale(y[i], y[i]);
      d2 += ((k2[i] - k1[i]) / sc) * ((k2[i] - k1[i]) / sc);
    }
    d2 = std::sqrt(d2 / static_cast<double>(n)) / h0;
    const double dmax = std::max(d1, d2);
    const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 1.0 / 5.0);
    h = std::min(100.0 * h0, h1);
    if (!std::isfinite(h) || h <= 0.0) h = 1e-6;
  }

  bool last_rejected = false;
  for (std::size_t out = 0; out < output_times.size(); ++out) {
    const double t_out = output_times[out];
    if (t_out < t) throw InvalidArgument("output times must be non-decreasing and >= t0");
    while (t < t_out) {
      if (stats.accepted + stats.rejected >= max_steps) {
        throw IntegrationFailure(t, "maximum number of steps exceeded");
      }
      if (h < 1e-12 * std::max(1.0, std::abs(t))) throw IntegrationFailure(t, "step size underflow");

      double step = h;
      bool lands = false;
      if (t + step >= t_out - 1e-12 * std::max(1.0, std::abs(t_out))) {
        step = t_out - t;
        lands = true;
      }

      for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + step * T::a21 * k1[i];
      f(t + T::c2 * step, ytmp, k2);
      for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + step * (T::a31 * k1[i] + T::a32 * k2[i]);
      f(t + T::c3 * step, ytmp, k3);
      for (std::size_t i = 0; i < n; ++i)
        ytmp[i] = y[i] + step * (T::a41 * k1[i] + T::a42 * k2[i] + T::a43 * k3[i]);
      f(t + T::c4 * step, ytmp, k4);
      for (std::size_t i = 0; i < n; ++i)
        ytmp[i] = y[i] + step * (T::a51 * k1[i] + T::a52 * k2[i] + T::a53 * k3[i] + T::a54 * k4[i]);
      f(t + T::c5 * step, ytmp, k5);
      for (std::size_t i = 0; i < n; ++i)
        ytmp[i] = y[i] + step * (T::a61 * k1[i] + T::a62 * k2[i] + T::a63 * k3[i] + T::a64 * k4[i] +
                                 T::a65 * k5[i]);
      const double t_new = lands ? t_out : t + step;
      f(t_new, ytmp, k6);
      for (std::size_t i = 0; i < n; ++i)
        ynew[i] = y[i] + step * (T::b1 * k1[i] + T::b3 * k3[i] + T::b4 * k4[i] + T::b5 * k5[i] +
                                 T::b6 * k6[i]);
      f(t_new, ynew, k7);
      stats.rhs_evals += 6;

      double err = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = step * (T::e1 * k1[i] + T::e3 * k3[i] + T::e4 * k4[i] + T::e5 * k5[i] +
                                 T::e6 * k6[i] + T::e7 * k7[i]);
        const double r = e / scale(y[i], ynew[i]);
        err += r * r;
      }
      err = std::sqrt(err / static_cast<double>(n));

      if (!std::isfinite(err) || !detail::all_finite(ynew) || !detail::all_finite(k7)) {
        ++stats.rejected;
        h = step * 0.1;
        last_rejected = true;
        continue;
      }

      const double fac = err == 0.0 ? 10.0 : 0.9 * std::pow(err, -0.2);
      if (err <= 1.0) {
        ++stats.accepted;
        t = t_new;
        std::copy(ynew.begin(), ynew.end(), y.begin());
        std::swap(k1, k7);
        const double grow = std::clamp(fac, 0.2, last_rejected ? 1.0 : 10.0);
        // A step clipped to an output time does not shrink the controller.
        h = (lands && step < h) ? std::max(h, step * grow) : step * grow;
        last_rejected = false;
      } else {
        ++stats.rejected;
        h = step * std::max(0.2, fac);
        last_rejected = true;
      }
    }
    observer(out, t, std::span<const double>(y.data(), n));
  }
  return stats;
}

}  // namespace epihmc
