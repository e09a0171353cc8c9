#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "moesd/errors.hpp"
#include "moesd/scalar.hpp"

namespace moesd {

struct HardwareSpec {
  double peak_compute = 0.0;    // operations per second
  double peak_bandwidth = 0.0;  // bytes per second
  std::int64_t gpu_count = 1;
  std::string label;

  /// Ridge point RP in operations per byte.
  double ridge_point() const { return peak_compute / peak_bandwidth; }
};

inline void validate(const HardwareSpec& hw) {
  detail::require(std::isfinite(hw.peak_compute) && hw.peak_compute > 0.0,
                  "peak_compute must be positive");
  detail::require(std::isfinite(hw.peak_bandwidth) && hw.peak_bandwidth > 0.0,
                  "peak_bandwidth must be positive");
  detail::require(hw.gpu_count >= 1, "gpu_count must be positive");
}

// Parameter volumes used to derive loading-time bounds.
struct VolumeSpec {
  double dense_param_count = 0.0;   // non-FFN parameters of the target model
  double expert_param_count = 0.0;  // parameters of one expert
  double draft_param_count = 0.0;
  std::int64_t bitwidth = 16;

  double bytes_per_param() const { return static_cast<double>(bitwidth) / 8.0; }
};

inline void validate(const VolumeSpec& vol) {
  detail::require(vol.dense_param_count > 0.0, "dense_param_count must be positive");
  detail::require(vol.expert_param_count > 0.0, "expert_param_count must be positive");
  detail::require(vol.draft_param_count > 0.0, "draft_param_count must be positive");
  detail::require(vol.bitwidth >= 1, "bitwidth must be positive");
}

enum class BoundRegime { memory_bound, ridge, compute_bound };

inline const char* to_string(BoundRegime regime) {
  switch (regime) {
    case BoundRegime::memory_bound: return "memory-bound";
    case BoundRegime::ridge: return "ridge";
    case BoundRegime::compute_bound: return "compute-bound";
  }
  return "unknown";
}

inline double arithmetic_intensity(double compute_ops, double bytes_accessed) {
  detail::require(bytes_accessed > 0.0, "bytes_accessed must be positive");
  detail::require(compute_ops >= 0.0, "compute_ops must be non-negative");
  return compute_ops / bytes_accessed;
}

inline BoundRegime classify(double intensity, const HardwareSpec& hw) {
  validate(hw);
  const double rp = hw.ridge_point();
  if (intensity < rp) return BoundRegime::memory_bound;
  if (intensity > rp) return BoundRegime::compute_bound;
  return BoundRegime::ridge;
}

/// Transitions beyond this token count are evaluated in log space.
inline constexpr double kGrowthLogSpaceCap = 1e4;

namespace detail {

template <typename Scalar>
void require_growth_domain(const Scalar& tokens, const Scalar& transition,
                           const Scalar& base) {
  require(value_of(tokens) >= 0.0, "growth curve needs t >= 0");
  require(value_of(transition) > 0.0, "growth curve needs a positive transition");
  require(value_of(base) > 1.0, "growth curve base s must exceed 1");
}

}  // namespace detail

/// ln G(t; transition, s). Finite wherever its arguments are, even when G
/// itself overflows.
template <typename Scalar>
Scalar log_growth_curve(const Scalar& tokens, const Scalar& transition,
                        const Scalar& base) {
  using std::log;
  detail::require_growth_domain(tokens, transition, base);
  const Scalar ln_s = log(base);
  if (value_of(tokens) <= value_of(transition)) return tokens * ln_s;
  return transition * ln_s + log(Scalar(1) + ln_s * (tokens - transition));
}

/// Roofline growth curve: s^t up to the transition, then the tangent line
/// s^L * (1 + ln(s) * (t - L)), continuous in value and slope at t = L.
template <typename Scalar>
Scalar growth_curve(const Scalar& tokens, const Scalar& transition,
                    const Scalar& base, double log_space_cap = kGrowthLogSpaceCap) {
  using std::exp;
  using std::log;
  detail::require_growth_domain(tokens, transition, base);
  if (value_of(transition) > log_space_cap) {
    return exp(log_growth_curve(tokens, transition, base));
  }
  const Scalar ln_s = log(base);
  if (value_of(tokens) <= value_of(transition)) return exp(tokens * ln_s);
  return exp(transition * ln_s) * (Scalar(1) + ln_s * (tokens - transition));
}

inline double growth_curve(double tokens, double transition, double base,
                           double log_space_cap = kGrowthLogSpaceCap) {
  return growth_curve<double>(tokens, transition, base, log_space_cap);
}

}  // namespace moesd
