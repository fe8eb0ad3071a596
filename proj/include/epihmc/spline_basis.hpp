#pragma once

/// \file
/// Clamped B-spline basis on a closed time window and the random-walk
/// difference penalty used as the smoothness prior on the coefficients.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "epihmc/errors.hpp"

namespace epihmc {

struct SplineConfig {
  double t0 = 0.0;
  double t1 = 100.0;
  int internal_knots = 10;  // Q, includes both ends of [t0, t1]
  int degree = 3;           // d

  int basis_size() const { return internal_knots + degree - 1; }
  bool operator==(const SplineConfig&) const = default;

  void validate() const {
    if (!(t1 > t0)) throw InvalidArgument("spline window requires t1 > t0");
    if (internal_knots < 2) throw InvalidArgument("spline requires at least 2 internal knots");
    if (degree < 1) throw InvalidArgument("spline degree must be >= 1");
  }
};

/// Knot sequence with `degree` repeated knots at each end of [t0, t1].
class KnotVector {
 public:
  KnotVector() = default;
  KnotVector(std::vector<double> knots, int degree, double t0, double t1)
      : knots_(std::move(knots)), degree_(degree), t0_(t0), t1_(t1) {}

  const std::vector<double>& knots() const { return knots_; }
  int degree() const { return degree_; }
  double t0() const { return t0_; }
  double t1() const { return t1_; }
  int basis_size() const { return static_cast<int>(knots_.size()) - degree_ - 1; }

  /// Index k of the knot span [knots[k], knots[k+1]) containing t. The right
  /// end of the window belongs to the last non-empty span.
  int find_span(double t) const {
    const int m = basis_size();
    if (t >= knots_[m]) return m - 1;
    auto it = std::upper_bound(knots_.begin() + degree_, knots_.begin() + m, t);
    return static_cast<int>(it - knots_.begin()) - 1;
  }

 private:
  std::vector<double> knots_;
  int degree_ = 0;
  double t0_ = 0.0;
  double t1_ = 0.0;
};

inline KnotVector make_knots(const SplineConfig& config) {
  config.validate();
  const int q = config.internal_knots;
  const int d = config.degree;
  std::vector<double> knots;
  knots.reserve(static_cast<std::size_t>(q + 2 * d));
  knots.insert(knots.end(), static_cast<std::size_t>(d), config.t0);
  const double spacing = (config.t1 - config.t0) / (q - 1);
  for (int i = 0; i < q; ++i) {
    knots.push_back(i == q - 1 ? config.t1 : config.t0 + spacing * i);
  }
  knots.insert(knots.end(), static_cast<std::size_t>(d), config.t1);
  return KnotVector(std::move(knots), d, config.t0, config.t1);
}

/// Evaluates the d+1 basis functions that can be nonzero at t (Cox-de Boor
/// triangle). Writes them into `out[0..d]` and returns the index of the first.
inline int eval_basis_nonzero(const KnotVector& kv, double t, std::span<double> out) {
  if (!(t >= kv.t0() && t <= kv.t1())) {
    throw InvalidArgument("spline evaluated outside its window at t=" + std::to_string(t));
  }
  const int d = kv.degree();
  const auto& u = kv.knots();
  const int span = kv.find_span(t);

  // Scratch for left/right differences; degree is small in practice.
  double left_buf[16];
  double right_buf[16];
  std::vector<double> heap_left, heap_right;
  double* left = left_buf;
  double* right = right_buf;
  if (d + 1 > 16) {
    heap_left.resize(static_cast<std::size_t>(d + 1));
    heap_right.resize(static_cast<std::size_t>(d + 1));
    left = heap_left.data();
    right = heap_right.data();
  }

  out[0] = 1.0;
  for (int j = 1; j <= d; ++j) {
    left[j] = t - u[static_cast<std::size_t>(span + 1 - j)];
    right[j] = u[static_cast<std::size_t>(span + j)] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = out[static_cast<std::size_t>(r)] / (right[r + 1] + left[j - r]);
      out[static_cast<std::size_t>(r)] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[static_cast<std::size_t>(j)] = saved;
  }
  return span - d;
}

/// Dense basis vector (B_1(t), ..., B_m(t)).
inline std::vector<double> eval_basis(const KnotVector& kv, double t) {
  std::vector<double> local(static_cast<std::size_t>(kv.degree() + 1));
  const int first = eval_basis_nonzero(kv, t, local);
  std::vector<double> basis(static_cast<std::size_t>(kv.basis_size()), 0.0);
  std::copy(local.begin(), local.end(), basis.begin() + first);
  return basis;
}

inline double eval_log_beta(std::span<const double> coeffs, std::span<const double> basis_at_t) {
  if (coeffs.size() != basis_at_t.size()) {
    throw InvalidArgument("coefficient/basis dimension mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < coeffs.size(); ++i) acc += coeffs[i] * basis_at_t[i];
  return acc;
}

struct PenaltyMatrix {
  Eigen::MatrixXd entries;
  int order = 2;

  int size() const { return static_cast<int>(entries.rows()); }

  /// beta' K beta
  double quadratic_form(std::span<const double> beta) const {
    Eigen::Map<const Eigen::VectorXd> b(beta.data(), static_cast<Eigen::Index>(beta.size()));
    return b.dot(entries * b);
  }
};

/// q-th order difference matrix, (m - q) x m.
inline Eigen::MatrixXd difference_matrix(int m, int q) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Identity(m, m);
  for (int k = 0; k < q; ++k) {
    const Eigen::Index rows = d.rows() - 1;
    d = (d.bottomRows(rows) - d.topRows(rows)).eval();
  }
  return d;
}

inline PenaltyMatrix penalty_matrix(int m, int q) {
  if (q < 1) throw InvalidArgument("random-walk order must be >= 1");
  if (m <= q) throw InvalidArgument("penalty requires basis size m > order q");
  const Eigen::MatrixXd d = difference_matrix(m, q);
  return PenaltyMatrix{d.transpose() * d, q};
}

}  // namespace epihmc
