#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "moesd/errors.hpp"
#include "moesd/expert_stats.hpp"
#include "moesd/roofline.hpp"
#include "moesd/scalar.hpp"

// Forward-time decomposition of target and draft models, and the speculative
// decoding speedup built from it.

namespace moesd {

inline constexpr std::size_t kCostParamCount = 10;

inline constexpr std::array<std::string_view, kCostParamCount> kCostParamNames = {
    "bias",        "k1",      "k2",          "k3",       "draft_bias",
    "draft_k",     "reject_bias", "reject_k", "lambda",  "s"};

/// Fitted coefficients of the forward-time model. Times are in arbitrary but
/// consistent units; lambda scales the ridge point and s is the growth base.
template <typename Scalar = double>
struct CostParams {
  using Vector = Eigen::Matrix<Scalar, static_cast<int>(kCostParamCount), 1>;

  Scalar bias{0};
  Scalar k1{0};
  Scalar k2{0};
  Scalar k3{0};
  Scalar draft_bias{0};
  Scalar draft_k{0};
  Scalar reject_bias{0};
  Scalar reject_k{0};
  Scalar lambda{1};
  Scalar s{2};

  Vector to_vector() const {
    Vector v;
    v << bias, k1, k2, k3, draft_bias, draft_k, reject_bias, reject_k, lambda, s;
    return v;
  }

  template <typename Derived>
  static CostParams from_vector(const Eigen::MatrixBase<Derived>& v) {
    return CostParams{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]};
  }

  /// Multiplies every time coefficient (all but lambda and s) by `factor`.
  CostParams scaled_times(Scalar factor) const {
    CostParams p = *this;
    p.bias *= factor;
    p.k1 *= factor;
    p.k2 *= factor;
    p.k3 *= factor;
    p.draft_bias *= factor;
    p.draft_k *= factor;
    p.reject_bias *= factor;
    p.reject_k *= factor;
    return p;
  }
};

inline constexpr double kLambdaMin = 0.2;
inline constexpr double kLambdaMax = 1.0;
inline constexpr double kGrowthBaseMax = 2.0;

template <typename Scalar>
void validate(const CostParams<Scalar>& p) {
  const auto v = p.to_vector();
  for (std::size_t i = 0; i < 8; ++i) {
    const double x = value_of(v[static_cast<int>(i)]);
    detail::require(std::isfinite(x) && x >= 0.0,
                    std::string(kCostParamNames[i]) + " must be finite and >= 0");
  }
  detail::require(value_of(p.lambda) >= kLambdaMin && value_of(p.lambda) <= kLambdaMax,
                  "lambda must lie in [0.2, 1]");
  detail::require(value_of(p.s) > 1.0 && value_of(p.s) <= kGrowthBaseMax,
                  "s must lie in (1, 2]");
}

enum class SpeedupVariant {
  alg1,  // sigma (g+1) ar / (draft + ar + verify + reject); used for fitting
  eq2,   // sigma (g+1) ar / (g * draft + verify + reject)
};

inline std::string_view to_string(SpeedupVariant v) {
  return v == SpeedupVariant::alg1 ? "alg1" : "eq2";
}

inline std::optional<SpeedupVariant> parse_variant(std::string_view text) {
  if (text == "alg1") return SpeedupVariant::alg1;
  if (text == "eq2") return SpeedupVariant::eq2;
  return std::nullopt;
}

/// Additive terms of one target-model forward pass over `tokens` tokens.
template <typename Scalar = double>
struct ForwardTerms {
  Scalar fixed{0};            // bias
  Scalar dense_growth{0};     // k1 * G(t)
  Scalar expert_loading{0};   // k2 * N(t)
  Scalar expert_growth{0};    // k3 * G(T_exp)
  double activated_experts = 0.0;
  double expert_load = 0.0;

  Scalar total() const { return fixed + dense_growth + expert_loading + expert_growth; }
};

template <typename Scalar = double>
struct ForwardBreakdown {
  ForwardTerms<Scalar> ar;      // T_T(B, 1)
  ForwardTerms<Scalar> verify;  // T_T(B, gamma)
  Scalar draft_time{0};         // T_D(B, 1)
  Scalar reject_time{0};

  Scalar ar_time() const { return ar.total(); }
  Scalar verify_time() const { return verify.total(); }
  double n_ar() const { return ar.activated_experts; }
  double n_sd() const { return verify.activated_experts; }
  double t_ar() const { return ar.expert_load; }
  double t_sd() const { return verify.expert_load; }
};

namespace detail {

inline void require_batch(std::int64_t batch) {
  require(batch >= 1, "batch size must be at least 1, got " + std::to_string(batch));
}

inline void require_draft_length(std::int64_t draft_length) {
  require(draft_length >= 1, "draft length must be at least 1");
}

template <typename Scalar>
Scalar transition_point(const CostParams<Scalar>& p, const HardwareSpec& hw) {
  return p.lambda * Scalar(hw.ridge_point());
}

}  // namespace detail

/// Target-model forward pass over `tokens` tokens in one step.
template <typename Scalar>
ForwardTerms<Scalar> target_forward(const CostParams<Scalar>& p, const MoEArch& arch,
                                    const HardwareSpec& hw, std::int64_t tokens) {
  validate(p);
  validate(hw);
  const double n = expected_activated_experts(arch, tokens);
  const double load = static_cast<double>(tokens) *
                      static_cast<double>(arch.active_per_token) / n;
  const Scalar transition = detail::transition_point(p, hw);

  ForwardTerms<Scalar> terms;
  terms.activated_experts = n;
  terms.expert_load = load;
  terms.fixed = p.bias;
  terms.dense_growth =
      p.k1 * growth_curve(Scalar(static_cast<double>(tokens)), transition, p.s);
  terms.expert_loading = p.k2 * Scalar(n);
  terms.expert_growth = p.k3 * growth_curve(Scalar(load), transition, p.s);
  return terms;
}

template <typename Scalar>
ForwardTerms<Scalar> ar_forward_time(const CostParams<Scalar>& p, const MoEArch& arch,
                                     const HardwareSpec& hw, std::int64_t batch) {
  detail::require_batch(batch);
  return target_forward(p, arch, hw, batch);
}

template <typename Scalar>
ForwardTerms<Scalar> verify_forward_time(const CostParams<Scalar>& p,
                                         const MoEArch& arch, const HardwareSpec& hw,
                                         std::int64_t batch, std::int64_t draft_length) {
  detail::require_batch(batch);
  detail::require_draft_length(draft_length);
  return target_forward(p, arch, hw, batch * draft_length);
}

template <typename Scalar>
Scalar draft_forward_time(const CostParams<Scalar>& p, const HardwareSpec& hw,
                          std::int64_t batch) {
  detail::require_batch(batch);
  validate(p);
  validate(hw);
  return p.draft_bias +
         p.draft_k * growth_curve(Scalar(static_cast<double>(batch)),
                                  detail::transition_point(p, hw), p.s);
}

template <typename Scalar>
Scalar reject_time(const CostParams<Scalar>& p, std::int64_t batch) {
  detail::require_batch(batch);
  return p.reject_bias + p.reject_k * Scalar(static_cast<double>(batch));
}

template <typename Scalar>
ForwardBreakdown<Scalar> forward_breakdown(const CostParams<Scalar>& p,
                                           const MoEArch& arch, const HardwareSpec& hw,
                                           std::int64_t batch, std::int64_t draft_length) {
  ForwardBreakdown<Scalar> b;
  b.ar = ar_forward_time(p, arch, hw, batch);
  b.verify = verify_forward_time(p, arch, hw, batch, draft_length);
  b.draft_time = draft_forward_time(p, hw, batch);
  b.reject_time = reject_time(p, batch);
  return b;
}

template <typename Scalar>
Scalar speedup_from_breakdown(const ForwardBreakdown<Scalar>& b,
                              std::int64_t draft_length, double yield,
                              SpeedupVariant variant = SpeedupVariant::alg1) {
  detail::require_draft_length(draft_length);
  detail::require(yield > 0.0 && yield <= 1.0, "yield must lie in (0, 1]");
  const Scalar gamma(static_cast<double>(draft_length));
  const Scalar ar = b.ar_time();
  Scalar denominator = b.verify_time() + b.reject_time;
  if (variant == SpeedupVariant::alg1) {
    denominator += b.draft_time + ar;
  } else {
    denominator += gamma * b.draft_time;
  }
  detail::require(value_of(denominator) > 0.0, "speedup denominator is zero");
  return Scalar(yield * static_cast<double>(draft_length + 1)) * ar / denominator;
}

/// Predicted speedup of speculative decoding over autoregressive decoding.
template <typename Scalar>
Scalar compute_speedup(const CostParams<Scalar>& p, const MoEArch& arch,
                       const HardwareSpec& hw, std::int64_t batch,
                       std::int64_t draft_length, double yield,
                       SpeedupVariant variant = SpeedupVariant::alg1) {
  return speedup_from_breakdown(forward_breakdown(p, arch, hw, batch, draft_length),
                                draft_length, yield, variant);
}

/// T_T(B, 1) / T_T(B, gamma): the share of the ideal speedup that the target
/// model's own forward pass lets through.
template <typename Scalar>
Scalar target_efficiency(const CostParams<Scalar>& p, const MoEArch& arch,
                         const HardwareSpec& hw, std::int64_t batch,
                         std::int64_t draft_length) {
  const Scalar verify = verify_forward_time(p, arch, hw, batch, draft_length).total();
  detail::require(value_of(verify) > 0.0, "verify time is zero");
  return ar_forward_time(p, arch, hw, batch).total() / verify;
}

/// Speedup measured from per-token latencies, x = T_AR / T_SD.
inline double per_token_speedup(double ar_time_per_token, double sd_time_per_token) {
  detail::require(ar_time_per_token > 0.0 && sd_time_per_token > 0.0,
                  "per-token times must be positive");
  return ar_time_per_token / sd_time_per_token;
}

struct SweepResult {
  std::vector<std::int64_t> batch_sizes;
  std::vector<double> speedups;
  std::vector<double> target_efficiencies;
  double peak_speedup = 0.0;
  std::int64_t peak_batch = 0;
  std::int64_t robust_lo = 0;  // robust range [robust_lo, robust_hi]
  std::int64_t robust_hi = 0;
  double robust_threshold = 0.0;
};

/// Fraction of the peak that bounds the robust range.
inline const double kRobustFraction = 1.0 / std::sqrt(2.0);

SweepResult sweep_batch(const CostParams<double>& p, const MoEArch& arch,
                        const HardwareSpec& hw, std::int64_t draft_length, double yield,
                        std::span<const std::int64_t> batch_sizes,
                        SpeedupVariant variant = SpeedupVariant::alg1);

}  // namespace moesd
