#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "moesd/errors.hpp"

// Chain speculation with i.i.d. per-token acceptance: a round proposes
// `draft_length` tokens, keeps the accepted prefix and emits one bonus token.

namespace moesd {

inline constexpr double kYieldConsistencyTolerance = 1e-9;

/// Smallest attainable yield for a draft length (alpha = 0: only the bonus
/// token survives).
inline double minimum_yield(std::int64_t draft_length) {
  return 1.0 / static_cast<double>(draft_length + 1);
}

/// Yield sigma: expected generated tokens per round over the maximum
/// draft_length + 1.
inline double sigma_from_alpha(double alpha, std::int64_t draft_length) {
  detail::require(draft_length >= 1, "draft length must be at least 1");
  detail::require(alpha >= 0.0 && alpha <= 1.0,
                  "acceptance rate must lie in [0, 1]");
  if (alpha == 1.0) return 1.0;
  // (1 - a^(g+1)) / (1 - a) as the geometric sum 1 + a + ... + a^g.
  double tokens = 1.0;
  for (std::int64_t i = 0; i < draft_length; ++i) tokens = 1.0 + alpha * tokens;
  return tokens / static_cast<double>(draft_length + 1);
}

/// Inverse of sigma_from_alpha for fixed draft length, by bisection.
inline double alpha_from_sigma(double sigma, std::int64_t draft_length) {
  detail::require(draft_length >= 1, "draft length must be at least 1");
  const double floor = minimum_yield(draft_length);
  detail::require(std::isfinite(sigma) && sigma >= floor - 1e-15 &&
                      sigma <= 1.0 + 1e-15,
                  "yield " + std::to_string(sigma) +
                      " is outside the attainable range [1/(gamma+1), 1]");
  if (sigma <= floor) return 0.0;
  if (sigma >= 1.0) return 1.0;

  double lo = 0.0;
  double hi = 1.0;
  while (hi - lo > 1e-15) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (sigma_from_alpha(mid, draft_length) < sigma) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

struct SpecConfig {
  std::int64_t draft_length = 1;
  std::optional<double> acceptance_rate;
  std::optional<double> yield;

  /// sigma, taken from `yield` when present, else derived from alpha.
  double resolved_yield() const {
    if (yield) return *yield;
    return sigma_from_alpha(acceptance_rate.value_or(0.0), draft_length);
  }
};

inline void validate(const SpecConfig& cfg) {
  detail::require(cfg.draft_length >= 1, "draft length must be at least 1");
  detail::require(cfg.acceptance_rate.has_value() || cfg.yield.has_value(),
                  "speculation config needs an acceptance rate or a yield");
  if (cfg.acceptance_rate) {
    detail::require(*cfg.acceptance_rate >= 0.0 && *cfg.acceptance_rate <= 1.0,
                    "acceptance rate must lie in [0, 1]");
  }
  if (cfg.yield) {
    detail::require(*cfg.yield > 0.0 && *cfg.yield <= 1.0 &&
                        *cfg.yield >= minimum_yield(cfg.draft_length) - 1e-15,
                    "yield must lie in [1/(gamma+1), 1]");
  }
  if (cfg.acceptance_rate && cfg.yield) {
    const double implied = sigma_from_alpha(*cfg.acceptance_rate, cfg.draft_length);
    detail::require(std::abs(implied - *cfg.yield) <= kYieldConsistencyTolerance,
                    "acceptance rate and yield disagree");
  }
}

/// Expected tokens emitted per round, sigma * (gamma + 1).
inline double expected_tokens_per_round(const SpecConfig& cfg) {
  validate(cfg);
  return cfg.resolved_yield() * static_cast<double>(cfg.draft_length + 1);
}

}  // namespace moesd
