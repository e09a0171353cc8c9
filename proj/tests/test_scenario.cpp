#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <string>

#include <json.hpp>

#include "moesd/calibration.hpp"
#include "moesd/errors.hpp"
#include "moesd/scenario.hpp"
#include "moesd/validation.hpp"

using namespace moesd;

namespace {

const std::string kMinimal = R"({
  "arch": {"total_experts": 64, "active_per_token": 8},
  "hardware": {"peak_compute": 1e14, "peak_bandwidth": 1e12},
  "spec": {"draft_length": 4, "acceptance_rate": 0.8},
  "params": {"bias": 1, "k1": 0.5, "k2": 0.01, "k3": 0.2, "draft_bias": 0.05,
             "draft_k": 0.02, "reject_bias": 0.01, "reject_k": 0.001,
             "lambda": 1, "s": 1.01}
})";

std::string error_of(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

std::string with(const std::string& pointer, const nlohmann::json& value) {
  auto j = nlohmann::json::parse(kMinimal);
  j[nlohmann::json::json_pointer(pointer)] = value;
  return j.dump();
}

}  // namespace

TEST_CASE("parses a complete scenario") {
  const auto s = parse_scenario(kMinimal);
  REQUIRE(s.arch);
  CHECK(s.arch->total_experts == 64);
  CHECK(s.hardware.ridge_point() == 100.0);
  REQUIRE(s.spec);
  CHECK(s.spec->resolved_yield() == doctest::Approx(0.67232));
  REQUIRE(s.params);
  CHECK(s.params->k3 == 0.2);
  CHECK(s.variant == SpeedupVariant::alg1);
  CHECK(s.saturation_ratio == 0.95);
  CHECK_NOTHROW(s.require_prediction_inputs());
}

TEST_CASE("unknown fields are rejected with their path") {
  CHECK(error_of(with("/colour", 1)).find("colour") != std::string::npos);
  CHECK(error_of(with("/hardware/peak_flops", 1)).find("hardware.peak_flops") != std::string::npos);
  CHECK(error_of(with("/params/k4", 1)).find("params.k4") != std::string::npos);
  CHECK(error_of(with("/spec/temperature", 1)).find("spec.temperature") != std::string::npos);
}

TEST_CASE("bad values name the field") {
  CHECK(error_of(with("/hardware/peak_compute", -1)).find("hardware") != std::string::npos);
  CHECK(error_of(with("/hardware/peak_compute", "fast")).find("peak_compute") != std::string::npos);
  CHECK_FALSE(error_of(with("/arch/active_per_token", 65)).empty());
  CHECK_FALSE(error_of(with("/params/lambda", 0.1)).empty());
  CHECK_FALSE(error_of(with("/variant", "eq3")).empty());
  CHECK_FALSE(error_of(with("/hardware/ridge_point", 7)).empty());
  CHECK(error_of(with("/hardware/ridge_point", 100)).empty());
  CHECK(error_of(with("/arch/sparsity", 0.125)).empty());
  CHECK_FALSE(error_of(with("/arch/sparsity", 0.5)).empty());
  CHECK_FALSE(error_of("{not json").empty());
  CHECK_FALSE(error_of("[]").empty());
}

TEST_CASE("hardware is required and prediction inputs are checked") {
  auto j = nlohmann::json::parse(kMinimal);
  j.erase("hardware");
  CHECK_FALSE(error_of(j.dump()).empty());
  j = nlohmann::json::parse(kMinimal);
  j.erase("params");
  const auto s = parse_scenario(j.dump());
  CHECK_THROWS_AS(s.require_prediction_inputs(), InputError);
}

TEST_CASE("params and profile are exclusive") {
  CHECK_FALSE(error_of(with("/profile", "p.json")).empty());
}

TEST_CASE("shipped reference scenario resolves its profile") {
  const std::filesystem::path dir = MOESD_CONFIG_DIR;
  const auto s = load_scenario(dir / "reference_scenario.json");
  REQUIRE(s.params);
  CHECK(s.params->bias == 0.006);
  CHECK(s.params->s == 1.02);
  REQUIRE(s.volume);
  CHECK(s.volume->bitwidth == 16);
  CHECK_THROWS_AS(load_scenario(dir / "missing.json"), InputError);
}

TEST_CASE("profile json round trip") {
  const auto ref = calibration_reference();
  const auto all = synthesize_measurements(ref.truth, ref.hardware, SynthGrid{}, 0.0, 0);
  const auto used = stride_select(all, 11, 0);
  const auto bounds = default_bounds(ref.volume, ref.hardware, used,
                                     default_reject_time_ceiling(ref.volume, ref.hardware));
  FitConfig config;
  config.multi_start_count = 2;
  const auto result = fit(used, ref.hardware, bounds, config);

  ScenarioConfig scenario;
  scenario.hardware = ref.hardware;
  scenario.arch = MoEArch{64, 8};
  FitProvenance prov{all.size(), used.size(), 11, 0, 2};
  const std::string text = profile_json(scenario, bounds, result, prov);

  const auto j = nlohmann::ordered_json::parse(text);
  CHECK(j.begin().key() == "params");
  CHECK(j["bounds"]["k1"][1].is_null());
  CHECK(j["solver"]["measurements_used"] == 21);
  CHECK(j["solver"]["stride"] == 11);
  CHECK(j["residuals"]["count"] == 21);

  const auto profile = parse_profile(text);
  CHECK((profile.params.to_vector().array() == result.params.to_vector().array()).all());
  CHECK(profile.hardware.peak_bandwidth == ref.hardware.peak_bandwidth);
  CHECK(profile.variant == SpeedupVariant::alg1);
}
