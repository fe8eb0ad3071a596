#pragma once

/// \file
/// Scalar prior families with closed-form log densities and derivatives.

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <variant>

#include "epihmc/errors.hpp"

namespace epihmc {

struct NormalPrior {
  double mean = 0.0;
  double sd = 1.0;
};
struct TruncatedNormalPrior {
  double mean = 0.0;
  double sd = 1.0;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
};
struct UniformPrior {
  double lower = 0.0;
  double upper = 1.0;
};
struct ExponentialPrior {
  double rate = 1.0;
};
struct InverseGammaPrior {
  double shape = 1.0;
  double scale = 1.0;
};

using Prior = std::variant<NormalPrior, TruncatedNormalPrior, UniformPrior, ExponentialPrior, InverseGammaPrior>;

/// log p(x) and d/dx log p(x); `in_support` false means p(x) = 0.
struct PriorTerm {
  bool in_support = true;
  double log_density = 0.0;
  double derivative = 0.0;

  static PriorTerm outside() {
    return {false, -std::numeric_limits<double>::infinity(), 0.0};
  }
};

struct Support {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  bool bounded() const { return std::isfinite(lower) && std::isfinite(upper); }
};

namespace detail {

inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double normal_log_density(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

}  // namespace detail

inline void validate_prior(const Prior& prior) {
  std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NormalPrior>) {
          if (!(p.sd > 0.0)) throw InvalidArgument("normal prior requires sd > 0");
        } else if constexpr (std::is_same_v<T, TruncatedNormalPrior>) {
          if (!(p.sd > 0.0)) throw InvalidArgument("truncated normal prior requires sd > 0");
          if (!(p.upper > p.lower)) throw InvalidArgument("truncated normal prior requires upper > lower");
        } else if constexpr (std::is_same_v<T, UniformPrior>) {
          if (!(p.upper > p.lower)) throw InvalidArgument("uniform prior requires upper > lower");
        } else if constexpr (std::is_same_v<T, ExponentialPrior>) {
          if (!(p.rate > 0.0)) throw InvalidArgument("exponential prior requires rate > 0");
        } else {
          if (!(p.shape > 0.0 && p.scale > 0.0)) {
            throw InvalidArgument("inverse gamma prior requires shape > 0 and scale > 0");
          }
        }
      },
      prior);
}

inline Support prior_support(const Prior& prior) {
  return std::visit(
      [](const auto& p) -> Support {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NormalPrior>) {
          return {};
        } else if constexpr (std::is_same_v<T, TruncatedNormalPrior> || std::is_same_v<T, UniformPrior>) {
          return {p.lower, p.upper};
        } else {
          return {0.0, std::numeric_limits<double>::infinity()};
        }
      },
      prior);
}

inline PriorTerm evaluate_prior(const Prior& prior, double x) {
  return std::visit(
      [x](const auto& p) -> PriorTerm {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NormalPrior>) {
          return {true, detail::normal_log_density(x, p.mean, p.sd), -(x - p.mean) / (p.sd * p.sd)};
        } else if constexpr (std::is_same_v<T, TruncatedNormalPrior>) {
          if (x < p.lower || x > p.upper) return PriorTerm::outside();
          const double mass = detail::std_normal_cdf((p.upper - p.mean) / p.sd) -
                              detail::std_normal_cdf((p.lower - p.mean) / p.sd);
          return {true, detail::normal_log_density(x, p.mean, p.sd) - std::log(mass),
                  -(x - p.mean) / (p.sd * p.sd)};
        } else if constexpr (std::is_same_v<T, UniformPrior>) {
          if (x < p.lower || x > p.upper) return PriorTerm::outside();
          return {true, -std::log(p.upper - p.lower), 0.0};
        } else if constexpr (std::is_same_v<T, ExponentialPrior>) {
          if (x < 0.0) return PriorTerm::outside();
          return {true, std::log(p.rate) - p.rate * x, -p.rate};
        } else {
          if (!(x > 0.0)) return PriorTerm::outside();
          return {true,
                  p.shape * std::log(p.scale) - std::lgamma(p.shape) - (p.shape + 1.0) * std::log(x) - p.scale / x,
                  -(p.shape + 1.0) / x + p.scale / (x * x)};
        }
      },
      prior);
}

/// Draws from the prior; Normal draws are redrawn until they land in
/// `positive_only` territory when requested (for rates and seeds).
template <class Rng>
double sample_prior(const Prior& prior, Rng& rng, bool positive_only = false) {
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NormalPrior>) {
          std::normal_distribution<double> dist(p.mean, p.sd);
          for (int attempt = 0; attempt < 10000; ++attempt) {
            const double x = dist(rng);
            if (!positive_only || x > 0.0) return x;
          }
          throw InvalidArgument("normal prior puts negligible mass on positive values");
        } else if constexpr (std::is_same_v<T, TruncatedNormalPrior>) {
          std::normal_distribution<double> dist(p.mean, p.sd);
          for (int attempt = 0; attempt < 100000; ++attempt) {
            const double x = dist(rng);
            if (x >= p.lower && x <= p.upper && (!positive_only || x > 0.0)) return x;
          }
          throw InvalidArgument("truncated normal prior has negligible mass in its bounds");
        } else if constexpr (std::is_same_v<T, UniformPrior>) {
          std::uniform_real_distribution<double> dist(p.lower, p.upper);
          return dist(rng);
        } else if constexpr (std::is_same_v<T, ExponentialPrior>) {
          std::exponential_distribution<double> dist(p.rate);
          return dist(rng);
        } else {
          std::gamma_distribution<double> dist(p.shape, 1.0 / p.scale);
          return 1.0 / dist(rng);
        }
      },
      prior);
}

inline std::string describe_prior(const Prior& prior) {
  return std::visit(
      [](const auto& p) -> std::string {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NormalPrior>) {
          return "Normal(" + std::to_string(p.mean) + ", " + std::to_string(p.sd) + "^2)";
        } else if constexpr (std::is_same_v<T, TruncatedNormalPrior>) {
          return "TruncatedNormal(" + std::to_string(p.mean) + ", " + std::to_string(p.sd) + "^2, [" +
                 std::to_string(p.lower) + ", " + std::to_string(p.upper) + "])";
        } else if constexpr (std::is_same_v<T, UniformPrior>) {
          return "Uniform(" + std::to_string(p.lower) + ", " + std::to_string(p.upper) + ")";
        } else if constexpr (std::is_same_v<T, ExponentialPrior>) {
          return "Exponential(" + std::to_string(p.rate) + ")";
        } else {
          return "InverseGamma(" + std::to_string(p.shape) + ", " + std::to_string(p.scale) + ")";
        }
      },
      prior);
}

}  // namespace epihmc
