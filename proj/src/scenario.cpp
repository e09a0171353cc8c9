#include "moesd/scenario.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include <json.hpp>

namespace moesd {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw InputError(path + ": " + what);
}

void expect_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
}

void reject_unknown(const json& j, const std::string& path,
                    std::initializer_list<const char*> known) {
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) fail(path + "." + item.key(), "unknown field");
  }
}

const json& required(const json& j, const std::string& path, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) fail(path + "." + key, "missing required field");
  return *it;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "expected a finite number");
  return v;
}

std::int64_t integer(const json& j, const std::string& path) {
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 9e15) {
      return static_cast<std::int64_t>(v);
    }
  }
  fail(path, "expected an integer");
}

std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

template <typename Validator>
void check(Validator&& v, const std::string& path) {
  try {
    v();
  } catch (const DomainError& e) {
    fail(path, e.what());
  }
}

json parse_text(const std::string& json_text, const std::string& what) {
  try {
    return json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InputError(what + ": invalid JSON: " + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

MoEArch parse_arch(const json& j, const std::string& path) {
  expect_object(j, path);
  reject_unknown(j, path, {"total_experts", "active_per_token", "sparsity"});
  MoEArch a;
  a.total_experts = integer(required(j, path, "total_experts"), path + ".total_experts");
  a.active_per_token =
      integer(required(j, path, "active_per_token"), path + ".active_per_token");
  check([&] { validate(a); }, path);
  if (const auto it = j.find("sparsity"); it != j.end()) {
    if (std::abs(number(*it, path + ".sparsity") - a.sparsity()) > 1e-12) {
      fail(path + ".sparsity", "does not equal active_per_token / total_experts");
    }
  }
  return a;
}

HardwareSpec parse_hardware(const json& j, const std::string& path) {
  expect_object(j, path);
  reject_unknown(j, path,
                 {"peak_compute", "peak_bandwidth", "ridge_point", "gpu_count", "label"});
  HardwareSpec hw;
  hw.peak_compute = number(required(j, path, "peak_compute"), path + ".peak_compute");
  hw.peak_bandwidth = number(required(j, path, "peak_bandwidth"), path + ".peak_bandwidth");
  if (const auto it = j.find("gpu_count"); it != j.end()) {
    hw.gpu_count = integer(*it, path + ".gpu_count");
  }
  if (const auto it = j.find("label"); it != j.end()) hw.label = text(*it, path + ".label");
  check([&] { validate(hw); }, path);
  if (const auto it = j.find("ridge_point"); it != j.end()) {
    const double rp = number(*it, path + ".ridge_point");
    if (std::abs(rp - hw.ridge_point()) > 1e-9 * hw.ridge_point()) {
      fail(path + ".ridge_point", "does not equal peak_compute / peak_bandwidth");
    }
  }
  return hw;
}

VolumeSpec parse_volume(const json& j, const std::string& path) {
  expect_object(j, path);
  reject_unknown(j, path, {"dense_param_count", "expert_param_count", "draft_param_count",
                           "bitwidth"});
  VolumeSpec v;
  v.dense_param_count =
      number(required(j, path, "dense_param_count"), path + ".dense_param_count");
  v.expert_param_count =
      number(required(j, path, "expert_param_count"), path + ".expert_param_count");
  v.draft_param_count =
      number(required(j, path, "draft_param_count"), path + ".draft_param_count");
  v.bitwidth = integer(required(j, path, "bitwidth"), path + ".bitwidth");
  check([&] { validate(v); }, path);
  return v;
}

SpecConfig parse_spec(const json& j, const std::string& path) {
  expect_object(j, path);
  reject_unknown(j, path, {"draft_length", "acceptance_rate", "yield"});
  SpecConfig s;
  s.draft_length = integer(required(j, path, "draft_length"), path + ".draft_length");
  if (const auto it = j.find("acceptance_rate"); it != j.end()) {
    s.acceptance_rate = number(*it, path + ".acceptance_rate");
  }
  if (const auto it = j.find("yield"); it != j.end()) s.yield = number(*it, path + ".yield");
  check([&] { validate(s); }, path);
  return s;
}

CostParams<double> parse_params(const json& j, const std::string& path) {
  expect_object(j, path);
  for (const auto& item : j.items()) {
    bool known = false;
    for (const auto name : kCostParamNames) known = known || item.key() == name;
    if (!known) fail(path + "." + item.key(), "unknown field");
  }
  CostParams<double>::Vector v;
  for (std::size_t i = 0; i < kCostParamCount; ++i) {
    const std::string name(kCostParamNames[i]);
    v[static_cast<int>(i)] = number(required(j, path, name.c_str()), path + "." + name);
  }
  const auto p = CostParams<double>::from_vector(v);
  check([&] { validate(p); }, path);
  return p;
}

SpeedupVariant parse_variant_field(const json& j, const std::string& path) {
  const auto v = parse_variant(text(j, path));
  if (!v) fail(path, "expected \"alg1\" or \"eq2\"");
  return *v;
}

using nlohmann::ordered_json;

ordered_json params_json(const CostParams<double>& p) {
  ordered_json j = ordered_json::object();
  const auto v = p.to_vector();
  for (std::size_t i = 0; i < kCostParamCount; ++i) {
    j[std::string(kCostParamNames[i])] = v[static_cast<int>(i)];
  }
  return j;
}

ordered_json hardware_json(const HardwareSpec& hw) {
  return ordered_json{{"peak_compute", hw.peak_compute},
              {"peak_bandwidth", hw.peak_bandwidth},
              {"gpu_count", hw.gpu_count},
              {"label", hw.label}};
}

}  // namespace

void ScenarioConfig::require_prediction_inputs() const {
  if (!arch) throw InputError("config: missing required field arch");
  if (!spec) throw InputError("config: missing required field spec");
  if (!params) throw InputError("config: needs params or a profile reference");
}

ScenarioConfig parse_scenario(const std::string& json_text,
                              const std::filesystem::path& base_dir) {
  const json j = parse_text(json_text, "config");
  const std::string root = "config";
  expect_object(j, root);
  reject_unknown(j, root, {"arch", "hardware", "volume", "spec", "params", "profile",
                           "variant", "saturation_ratio", "reject_time_ceiling"});

  ScenarioConfig c;
  c.hardware = parse_hardware(required(j, root, "hardware"), root + ".hardware");
  if (const auto it = j.find("arch"); it != j.end()) c.arch = parse_arch(*it, root + ".arch");
  if (const auto it = j.find("volume"); it != j.end()) {
    c.volume = parse_volume(*it, root + ".volume");
  }
  if (const auto it = j.find("spec"); it != j.end()) c.spec = parse_spec(*it, root + ".spec");
  if (j.contains("params") && j.contains("profile")) {
    fail(root, "params and profile are mutually exclusive");
  }
  if (const auto it = j.find("params"); it != j.end()) {
    c.params = parse_params(*it, root + ".params");
  }
  if (const auto it = j.find("profile"); it != j.end()) {
    std::filesystem::path ref = text(*it, root + ".profile");
    if (ref.is_relative()) ref = base_dir / ref;
    c.params = load_profile(ref).params;
  }
  if (const auto it = j.find("variant"); it != j.end()) {
    c.variant = parse_variant_field(*it, root + ".variant");
  }
  if (const auto it = j.find("saturation_ratio"); it != j.end()) {
    c.saturation_ratio = number(*it, root + ".saturation_ratio");
    if (!(c.saturation_ratio > 0.0 && c.saturation_ratio < 1.0)) {
      fail(root + ".saturation_ratio", "must lie in (0, 1)");
    }
  }
  if (const auto it = j.find("reject_time_ceiling"); it != j.end()) {
    c.reject_time_ceiling = number(*it, root + ".reject_time_ceiling");
    if (*c.reject_time_ceiling < 0.0) fail(root + ".reject_time_ceiling", "must be >= 0");
  }
  return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  return parse_scenario(read_file(path), path.parent_path());
}

Profile parse_profile(const std::string& json_text) {
  const json j = parse_text(json_text, "profile");
  const std::string root = "profile";
  expect_object(j, root);
  reject_unknown(j, root, {"params", "hardware", "arch", "spec", "variant", "bounds",
                           "objective", "residuals", "seed", "solver"});
  Profile p;
  p.params = parse_params(required(j, root, "params"), root + ".params");
  p.hardware = parse_hardware(required(j, root, "hardware"), root + ".hardware");
  if (const auto it = j.find("arch"); it != j.end()) p.arch = parse_arch(*it, root + ".arch");
  if (const auto it = j.find("spec"); it != j.end()) p.spec = parse_spec(*it, root + ".spec");
  if (const auto it = j.find("variant"); it != j.end()) {
    p.variant = parse_variant_field(*it, root + ".variant");
  }
  return p;
}

Profile load_profile(const std::filesystem::path& path) {
  return parse_profile(read_file(path));
}

std::string profile_json(const ScenarioConfig& scenario, const ParamBounds& bounds,
                         const FitResult& result, const FitProvenance& provenance) {
  ordered_json j;
  j["params"] = params_json(result.params);
  j["hardware"] = hardware_json(scenario.hardware);
  if (scenario.arch) {
    j["arch"] = {{"total_experts", scenario.arch->total_experts},
                 {"active_per_token", scenario.arch->active_per_token}};
  }
  if (scenario.spec) {
    ordered_json s{{"draft_length", scenario.spec->draft_length}};
    if (scenario.spec->acceptance_rate) s["acceptance_rate"] = *scenario.spec->acceptance_rate;
    if (scenario.spec->yield) s["yield"] = *scenario.spec->yield;
    j["spec"] = s;
  }
  j["variant"] = std::string(to_string(scenario.variant));

  ordered_json b = ordered_json::object();
  for (std::size_t i = 0; i < kCostParamCount; ++i) {
    const Bound& bd = bounds[i];
    b[std::string(kCostParamNames[i])] = ordered_json::array(
        {bd.lower, std::isfinite(bd.upper) ? ordered_json(bd.upper) : ordered_json(nullptr)});
  }
  j["bounds"] = b;

  j["objective"] = {{"half_sum_squares", result.objective},
                    {"mean_squared_error", result.mse}};
  const auto& r = result.residuals;
  j["residuals"] = {{"count", r.size()},
                    {"max_abs", r.size() ? r.cwiseAbs().maxCoeff() : 0.0},
                    {"rms", r.size() ? std::sqrt(r.squaredNorm() / double(r.size())) : 0.0},
                    {"mean", r.size() ? r.mean() : 0.0}};
  j["seed"] = result.seed;
  j["solver"] = {{"method", "trust-region reflective, multi-start"},
                 {"converged", result.converged},
                 {"termination", to_string(result.termination)},
                 {"iterations", result.iterations},
                 {"best_start", result.best_start},
                 {"multi_start_count", provenance.multi_start_count},
                 {"elapsed_seconds", result.elapsed_seconds},
                 {"measurements_total", provenance.measurements_total},
                 {"measurements_used", provenance.measurements_used},
                 {"stride", provenance.stride},
                 {"begin", provenance.begin}};
  return j.dump(2) + "\n";
}

}  // namespace moesd
