#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "moesd/cost_model.hpp"
#include "moesd/roofline.hpp"

// Self-check suites behind `moesd validate`.
//
//   activation  closed-form expert counts and loads against the routing oracle
//   acceptance  tokens per speculation round against the acceptance oracle
//   roofline    growth-curve continuity, load monotonicity, saturation
//               thresholds and target-efficiency limits (exact or tight checks)
//   fit         noiseless calibration round trip on the synthetic grid
//
// Monte Carlo checks pass when |analytic - mean| <= 3 SE + 0.5 / trials. The
// second term is half the spacing of the lattice that a mean of integer
// counts lives on; without it a check whose sample variance is exactly zero
// (every trial saturates) would demand bit equality with an analytic value
// that differs from the mode by less than one trial can resolve.

namespace moesd {

/// Default seed for `moesd validate` and the acceptance run.
inline constexpr std::uint64_t kDefaultValidationSeed = 1;

struct ValidationOptions {
  std::uint64_t seed = kDefaultValidationSeed;
  std::optional<std::int64_t> trials;  // overrides every suite's default
  unsigned workers = 1;
  /// Test-only: multiplies each analytic expectation before comparison.
  double analytic_scale = 1.0;
};

struct CheckResult {
  std::string suite;
  std::string name;
  double observed = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  /// Distance to failure in the check's own units; negative on failure.
  double margin = 0.0;
  bool passed = false;
};

struct ValidationReport {
  std::vector<CheckResult> checks;

  bool passed() const;
  std::size_t failures() const;
};

inline constexpr std::string_view kValidationSuites[] = {"activation", "acceptance",
                                                         "roofline", "fit"};

inline constexpr std::int64_t kActivationTrials = 100000;
inline constexpr std::int64_t kAcceptanceRounds = 1000000;

/// `suite` is one of kValidationSuites or "all"; anything else throws
/// InputError.
ValidationReport run_validation(std::string_view suite, const ValidationOptions& options);

/// Hardware, parameter volumes and ground-truth parameters for the synthetic
/// calibration round trip. The bandwidth and volumes put the loading-time
/// lower bounds at bias 4e-3, k2 3.855e-4 and draft_bias 2.5e-4.
struct CalibrationReference {
  HardwareSpec hardware;
  VolumeSpec volume;
  CostParams<double> truth;
};

CalibrationReference calibration_reference();

/// 3 SE + 0.5 / trials.
double monte_carlo_tolerance(double std_error, std::int64_t trials);

}  // namespace moesd
