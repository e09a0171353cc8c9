#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "moesd/cost_model.hpp"
#include "moesd/expert_stats.hpp"
#include "moesd/least_squares.hpp"
#include "moesd/roofline.hpp"

// Fitting CostParams to measured speedups.

namespace moesd {

/// Fewest measurements that can pin down all ten parameters.
inline constexpr std::size_t kMinFitMeasurements = 10;

/// s > 1 is enforced as s >= 1 + kGrowthBaseMargin.
inline constexpr double kGrowthBaseMargin = 1e-6;

struct Measurement {
  std::int64_t batch_size = 1;
  std::int64_t draft_length = 1;
  std::int64_t active_per_token = 1;
  std::int64_t total_experts = 1;
  double yield = 1.0;
  double speedup = 1.0;

  MoEArch arch() const { return MoEArch{total_experts, active_per_token}; }
};

void validate(const Measurement& m);

/// Orders by (K, gamma, B), the layout stride selection expects.
void sort_measurements(std::vector<Measurement>& ms);

struct Bound {
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();
};

struct ParamBounds {
  std::array<Bound, kCostParamCount> bounds{};

  Bound& operator[](std::size_t i) { return bounds[i]; }
  const Bound& operator[](std::size_t i) const { return bounds[i]; }

  bool contains(const CostParams<double>& p) const;
};

void validate(const ParamBounds& b);

/// Loading-time lower bounds from parameter volumes over peak bandwidth, with
/// uppers at five times those; [0, ceiling] for the rejection terms;
/// lambda in [0.2, 1]; s in (1, 2]; k1, k3, draft_k in [0, inf).
ParamBounds default_bounds(const VolumeSpec& vol, const HardwareSpec& hw,
                           std::span<const Measurement> measurements,
                           double reject_time_ceiling);

/// Default rejection-time ceiling when a config does not provide one.
double default_reject_time_ceiling(const VolumeSpec& vol, const HardwareSpec& hw);

/// Every `stride`-th measurement starting at `begin`.
std::vector<Measurement> stride_select(std::span<const Measurement> measurements,
                                       std::int64_t stride, std::int64_t begin = 0);

double predict_speedup(const CostParams<double>& p, const HardwareSpec& hw,
                       const Measurement& m, SpeedupVariant variant = SpeedupVariant::alg1);

/// Signed prediction errors, model minus measured.
Eigen::VectorXd residuals(const CostParams<double>& p, const HardwareSpec& hw,
                          std::span<const Measurement> measurements,
                          SpeedupVariant variant = SpeedupVariant::alg1);

/// 0.5 * sum of squared residuals.
double objective(const CostParams<double>& p, const HardwareSpec& hw,
                 std::span<const Measurement> measurements,
                 SpeedupVariant variant = SpeedupVariant::alg1);

/// sum of squared residuals / m.
double mean_squared_error(const CostParams<double>& p, const HardwareSpec& hw,
                          std::span<const Measurement> measurements,
                          SpeedupVariant variant = SpeedupVariant::alg1);

struct FitConfig {
  SpeedupVariant variant = SpeedupVariant::alg1;
  int max_iterations = 500;
  double tolerance = 1e-14;
  int multi_start_count = 8;
  std::uint64_t seed = 0;
  unsigned workers = 1;  // concurrent starts; 0 picks hardware concurrency
};

struct StartOutcome {
  CostParams<double> initial;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  int iterations = 0;
  Termination termination = Termination::max_iterations;
};

struct FitResult {
  CostParams<double> params;
  double objective = 0.0;  // 0.5 * sum r^2
  double mse = 0.0;        // sum r^2 / m
  Eigen::VectorXd residuals;
  int iterations = 0;
  bool converged = false;
  Termination termination = Termination::max_iterations;
  std::uint64_t seed = 0;
  std::size_t best_start = 0;
  std::vector<StartOutcome> starts;
  double elapsed_seconds = 0.0;
};

/// Multi-start bounded least squares. Deterministic for a given seed; the
/// result does not depend on `workers`.
FitResult fit(std::span<const Measurement> measurements, const HardwareSpec& hw,
              const ParamBounds& bounds, const FitConfig& config = {});

struct SynthGrid {
  std::int64_t total_experts = 64;
  std::vector<std::int64_t> active_per_token{1, 2, 4, 8, 12, 16};
  std::vector<std::int64_t> draft_lengths{2, 4};
  std::vector<std::int64_t> batch_sizes{1,  2,  4,  8,  12, 16, 20, 24, 28, 32,
                                        36, 40, 44, 48, 52, 56, 60, 80, 100};
  double acceptance_rate = 0.8;
};

/// Model speedups over the grid, sorted by (K, gamma, B), each multiplied by
/// (1 + noise * z) with z standard normal drawn from the seeded stream.
std::vector<Measurement> synthesize_measurements(const CostParams<double>& truth,
                                                 const HardwareSpec& hw,
                                                 const SynthGrid& grid, double noise,
                                                 std::uint64_t seed,
                                                 SpeedupVariant variant = SpeedupVariant::alg1);

}  // namespace moesd
