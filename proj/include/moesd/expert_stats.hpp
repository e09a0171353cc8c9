#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "moesd/errors.hpp"

// Expert activation statistics for a Mixture-of-Experts layer whose router
// picks K distinct experts out of E uniformly and independently per token.

namespace moesd {

inline constexpr double kDefaultSaturationRatio = 0.95;

struct MoEArch {
  std::int64_t total_experts = 1;
  std::int64_t active_per_token = 1;

  /// rho = K / E, in (0, 1]. rho == 1 is a dense FFN.
  double sparsity() const {
    return static_cast<double>(active_per_token) /
           static_cast<double>(total_experts);
  }
  bool dense() const { return active_per_token == total_experts; }
};

inline void validate(const MoEArch& arch) {
  detail::require(arch.total_experts >= 1,
                  "total_experts must be positive, got " +
                      std::to_string(arch.total_experts));
  detail::require(arch.active_per_token >= 1 &&
                      arch.active_per_token <= arch.total_experts,
                  "active_per_token must lie in [1, total_experts], got " +
                      std::to_string(arch.active_per_token));
}

namespace detail {

inline void require_tokens(std::int64_t tokens) {
  require(tokens >= 1,
          "token count must be at least 1, got " + std::to_string(tokens));
}

inline void require_sparsity(double rho) {
  require(rho > 0.0 && rho <= 1.0 && std::isfinite(rho),
          "sparsity must lie in (0, 1]");
}

// (1 - rho)^t without losing precision for large t or small rho.
template <typename Scalar>
Scalar survival(Scalar rho, Scalar tokens) {
  using std::exp;
  using std::log1p;
  if (rho >= Scalar(1)) return Scalar(0);
  return exp(tokens * log1p(-rho));
}

// 1 - (1 - rho)^t, accurate when the survival term is close to 1.
template <typename Scalar>
Scalar coverage(Scalar rho, Scalar tokens) {
  using std::expm1;
  using std::log1p;
  if (rho >= Scalar(1)) return Scalar(1);
  return -expm1(tokens * log1p(-rho));
}

}  // namespace detail

/// Probability that a given expert is hit by at least one of `tokens` tokens.
template <typename Scalar = double>
Scalar activation_probability(const MoEArch& arch, std::int64_t tokens) {
  validate(arch);
  detail::require_tokens(tokens);
  if (arch.dense()) return Scalar(1);
  return detail::coverage(Scalar(arch.active_per_token) /
                              Scalar(arch.total_experts),
                          Scalar(tokens));
}

/// Expected number of distinct experts activated by `tokens` tokens,
/// N(t) = E * (1 - ((E - K) / E)^t).
template <typename Scalar = double>
Scalar expected_activated_experts(const MoEArch& arch, std::int64_t tokens) {
  return Scalar(arch.total_experts) *
         activation_probability<Scalar>(arch, tokens);
}

/// Smallest token count t with 1 - (1 - rho)^t >= tau. Dense layers
/// (rho == 1) saturate with a single token.
inline std::int64_t full_activation_threshold(double rho,
                                              double tau = kDefaultSaturationRatio) {
  detail::require_sparsity(rho);
  detail::require(tau > 0.0 && tau < 1.0,
                  "saturation ratio must lie in (0, 1)");
  if (rho >= 1.0) return 1;

  auto saturated = [&](std::int64_t t) {
    return detail::coverage(rho, static_cast<double>(t)) >= tau;
  };
  const double estimate = std::ceil(std::log1p(-tau) / std::log1p(-rho));
  auto t = static_cast<std::int64_t>(std::max(1.0, estimate));
  // The closed form can land one off when the logarithm ratio is within
  // rounding of an integer; settle against the coverage predicate itself.
  while (t > 1 && saturated(t - 1)) --t;
  while (!saturated(t)) ++t;
  return t;
}

inline std::int64_t full_activation_threshold(
    const MoEArch& arch, double tau = kDefaultSaturationRatio) {
  validate(arch);
  return full_activation_threshold(arch.sparsity(), tau);
}

/// Mean tokens processed per activated expert,
/// T_exp(t; rho) = rho * t / (1 - (1 - rho)^t), which lies in [1, t].
template <typename Scalar = double>
Scalar mean_expert_load(double rho, std::int64_t tokens) {
  detail::require_sparsity(rho);
  detail::require_tokens(tokens);
  const Scalar t(tokens);
  if (rho >= 1.0) return t;
  return Scalar(rho) * t / detail::coverage(Scalar(rho), t);
}

template <typename Scalar = double>
Scalar mean_expert_load(const MoEArch& arch, std::int64_t tokens) {
  validate(arch);
  if (arch.dense()) {
    detail::require_tokens(tokens);
    return Scalar(tokens);
  }
  return mean_expert_load<Scalar>(arch.sparsity(), tokens);
}

/// F(rho; T) = (1 - rho)^(T - 1) * (rho * T + 1 - rho). dT_exp/drho > 0
/// exactly when F < 1, and for T > 1 F decreases from 1 as rho grows.
template <typename Scalar = double>
Scalar load_gradient_bound(double rho, std::int64_t tokens) {
  detail::require(rho > 0.0 && rho < 1.0, "sparsity must lie in (0, 1)");
  detail::require(tokens > 1, "load gradient bound requires T > 1");
  const Scalar r(rho);
  const Scalar t(tokens);
  return detail::survival(r, t - Scalar(1)) * (r * t + Scalar(1) - r);
}

/// ln F(rho; T). Stays finite where F itself underflows (large T, large rho).
template <typename Scalar = double>
Scalar log_load_gradient_bound(double rho, std::int64_t tokens) {
  using std::log;
  using std::log1p;
  detail::require(rho > 0.0 && rho < 1.0, "sparsity must lie in (0, 1)");
  detail::require(tokens > 1, "load gradient bound requires T > 1");
  const Scalar r(rho);
  const Scalar t(tokens);
  return (t - Scalar(1)) * log1p(-r) + log(r * t + Scalar(1) - r);
}

}  // namespace moesd
