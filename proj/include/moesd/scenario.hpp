#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "moesd/calibration.hpp"
#include "moesd/cost_model.hpp"
#include "moesd/expert_stats.hpp"
#include "moesd/roofline.hpp"
#include "moesd/speculation.hpp"

// JSON scenario configs and fitted profiles. Field names follow the domain
// types; unknown fields are rejected. Every problem is an InputError naming
// the offending JSON path.

namespace moesd {

struct ScenarioConfig {
  std::optional<MoEArch> arch;
  HardwareSpec hardware;
  std::optional<VolumeSpec> volume;
  std::optional<SpecConfig> spec;
  std::optional<CostParams<double>> params;
  SpeedupVariant variant = SpeedupVariant::alg1;
  double saturation_ratio = kDefaultSaturationRatio;
  std::optional<double> reject_time_ceiling;

  /// Throws InputError unless arch, spec and params are all present.
  void require_prediction_inputs() const;
};

/// `base_dir` resolves a relative "profile" reference.
ScenarioConfig parse_scenario(const std::string& json_text,
                              const std::filesystem::path& base_dir = {});
ScenarioConfig load_scenario(const std::filesystem::path& path);

struct Profile {
  CostParams<double> params;
  HardwareSpec hardware;
  std::optional<MoEArch> arch;
  std::optional<SpecConfig> spec;
  SpeedupVariant variant = SpeedupVariant::alg1;
};

Profile parse_profile(const std::string& json_text);
Profile load_profile(const std::filesystem::path& path);

struct FitProvenance {
  std::size_t measurements_total = 0;
  std::size_t measurements_used = 0;
  std::int64_t stride = 1;
  std::int64_t begin = 0;
  int multi_start_count = 0;
};

/// JSON profile: params, hardware, bounds, both objective normalizations,
/// residual summary, seed and solver metadata.
std::string profile_json(const ScenarioConfig& scenario, const ParamBounds& bounds,
                         const FitResult& result, const FitProvenance& provenance);

}  // namespace moesd
