#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "epihmc/errors.hpp"
#include "epihmc/model_spec.hpp"

namespace epihmc {

/// Sampled parameters in natural units. `alpha` is ignored by SIKR models and
/// `seed0` is E_0 (SEMIKR) or I_0 (SIKR).
struct ParamVector {
  double alpha = 0.5;
  double gamma = 0.1;
  double seed0 = 10.0;
  double phi_inv = 0.1;
  double tau = 1.0;
  std::vector<double> beta;

  double phi() const { return 1.0 / phi_inv; }

  bool operator==(const ParamVector&) const = default;
};

/// Slot of each scalar in the flat vector for a given family. Flat order is
/// (alpha, gamma, E0, phi_inv, tau, beta...) for SEMIKR and
/// (gamma, I0, phi_inv, tau, beta...) for SIKR.
struct ParamLayout {
  int alpha = -1;
  int gamma = 0;
  int seed0 = 1;
  int phi_inv = 2;
  int tau = 3;
  int beta = 4;
  int size = 4;

  static ParamLayout for_spec(const ModelSpec& spec) {
    ParamLayout l;
    const int shift = spec.has_exposed() ? 1 : 0;
    l.alpha = spec.has_exposed() ? 0 : -1;
    l.gamma = shift;
    l.seed0 = shift + 1;
    l.phi_inv = shift + 2;
    l.tau = shift + 3;
    l.beta = shift + 4;
    l.size = l.beta + spec.basis_size();
    return l;
  }
};

inline std::vector<std::string> param_names(const ModelSpec& spec) {
  std::vector<std::string> names;
  if (spec.has_exposed()) names.emplace_back("alpha");
  names.emplace_back("gamma");
  names.emplace_back(spec.has_exposed() ? "E0" : "I0");
  names.emplace_back("phi_inv");
  names.emplace_back("tau");
  for (int i = 1; i <= spec.basis_size(); ++i) names.push_back("beta_" + std::to_string(i));
  return names;
}

inline std::vector<double> flatten(const ModelSpec& spec, const ParamVector& p) {
  const auto l = ParamLayout::for_spec(spec);
  if (static_cast<int>(p.beta.size()) != spec.basis_size()) {
    throw InvalidArgument("beta has " + std::to_string(p.beta.size()) + " coefficients, model expects " +
                          std::to_string(spec.basis_size()));
  }
  std::vector<double> flat(static_cast<std::size_t>(l.size));
  if (l.alpha >= 0) flat[static_cast<std::size_t>(l.alpha)] = p.alpha;
  flat[static_cast<std::size_t>(l.gamma)] = p.gamma;
  flat[static_cast<std::size_t>(l.seed0)] = p.seed0;
  flat[static_cast<std::size_t>(l.phi_inv)] = p.phi_inv;
  flat[static_cast<std::size_t>(l.tau)] = p.tau;
  std::copy(p.beta.begin(), p.beta.end(), flat.begin() + l.beta);
  return flat;
}

inline ParamVector unflatten(const ModelSpec& spec, std::span<const double> flat) {
  const auto l = ParamLayout::for_spec(spec);
  if (static_cast<int>(flat.size()) != l.size) {
    throw InvalidArgument("parameter vector has length " + std::to_string(flat.size()) + ", expected " +
                          std::to_string(l.size));
  }
  ParamVector p;
  p.alpha = l.alpha >= 0 ? flat[static_cast<std::size_t>(l.alpha)] : 0.0;
  p.gamma = flat[static_cast<std::size_t>(l.gamma)];
  p.seed0 = flat[static_cast<std::size_t>(l.seed0)];
  p.phi_inv = flat[static_cast<std::size_t>(l.phi_inv)];
  p.tau = flat[static_cast<std::size_t>(l.tau)];
  p.beta.assign(flat.begin() + l.beta, flat.end());
  return p;
}

/// Feasible for the ODE and the observation model.
inline bool is_feasible(const ModelSpec& spec, const ParamVector& p) {
  if (spec.has_exposed() && !(p.alpha > 0.0 && std::isfinite(p.alpha))) return false;
  if (!(p.gamma > 0.0 && std::isfinite(p.gamma))) return false;
  if (!(p.seed0 > 0.0 && p.seed0 < spec.N)) return false;
  if (!(p.phi_inv > 0.0 && std::isfinite(p.phi_inv))) return false;
  if (!(p.tau > 0.0 && std::isfinite(p.tau))) return false;
  if (static_cast<int>(p.beta.size()) != spec.basis_size()) return false;
  for (double b : p.beta) {
    if (!std::isfinite(b)) return false;
  }
  return true;
}

}  // namespace epihmc
