#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "moesd/calibration.hpp"
#include "moesd/cost_model.hpp"
#include "moesd/errors.hpp"
#include "moesd/expert_stats.hpp"
#include "moesd/format.hpp"
#include "moesd/measurement_io.hpp"
#include "moesd/scenario.hpp"
#include "moesd/validation.hpp"

namespace moesd::cli {

namespace {

std::int64_t parse_int(const std::string& token, const std::string& what) {
  std::int64_t v = 0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || token.empty()) {
    throw InputError(what + ": '" + token + "' is not an integer");
  }
  return v;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(text);
  while (std::getline(in, part, sep)) parts.push_back(part);
  if (!text.empty() && text.back() == sep) parts.emplace_back();
  return parts;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  return out;
}

void finish_output(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw InputError("failed writing '" + path + "'");
}

SpeedupVariant resolve_variant(const std::string& flag, SpeedupVariant fallback) {
  if (flag.empty()) return fallback;
  const auto v = parse_variant(flag);
  if (!v) throw InputError("--variant must be alg1 or eq2, got '" + flag + "'");
  return *v;
}

class Printer {
 public:
  Printer(std::ostream& out, bool full) : out_(out), full_(full) {}

  void number(const std::string& key, double value) {
    out_ << key << '=' << format_number(value, full_) << '\n';
  }
  void integer(const std::string& key, std::int64_t value) {
    out_ << key << '=' << value << '\n';
  }
  void text(const std::string& key, std::string_view value) {
    out_ << key << '=' << value << '\n';
  }
  std::string fmt(double value) const { return format_number(value, full_); }

 private:
  std::ostream& out_;
  bool full_;
};

struct Common {
  bool full_precision = false;
};

struct PredictArgs {
  std::string config;
  std::int64_t batch = 0;
  std::string variant;
};

int cmd_predict(const PredictArgs& a, const Common& common, std::ostream& out) {
  const ScenarioConfig sc = load_scenario(a.config);
  sc.require_prediction_inputs();
  const SpeedupVariant variant = resolve_variant(a.variant, sc.variant);
  const auto& params = *sc.params;
  const auto& arch = *sc.arch;
  const auto& spec = *sc.spec;
  const double yield = spec.resolved_yield();

  const auto b = forward_breakdown(params, arch, sc.hardware, a.batch, spec.draft_length);
  const double speedup = speedup_from_breakdown(b, spec.draft_length, yield, variant);
  const double efficiency =
      target_efficiency(params, arch, sc.hardware, a.batch, spec.draft_length);

  Printer p(out, common.full_precision);
  p.number("speedup", speedup);
  p.number("target_efficiency", efficiency);
  p.integer("batch_size", a.batch);
  p.integer("draft_length", spec.draft_length);
  p.number("yield", yield);
  p.text("variant", to_string(variant));
  p.number("n_ar", b.n_ar());
  p.number("n_sd", b.n_sd());
  p.number("t_ar", b.t_ar());
  p.number("t_sd", b.t_sd());
  const std::pair<const char*, const ForwardTerms<double>*> passes[] = {{"ar", &b.ar},
                                                                       {"verify", &b.verify}};
  for (const auto& [name, terms] : passes) {
    const std::string prefix = name;
    p.number(prefix + ".fixed", terms->fixed);
    p.number(prefix + ".dense_growth", terms->dense_growth);
    p.number(prefix + ".expert_loading", terms->expert_loading);
    p.number(prefix + ".expert_growth", terms->expert_growth);
    p.number(prefix + ".total", terms->total());
  }
  p.number("draft_time", b.draft_time);
  p.number("reject_time", b.reject_time);
  p.number("saturation_ratio", sc.saturation_ratio);
  p.integer("t_thres", full_activation_threshold(arch, sc.saturation_ratio));
  return kExitOk;
}

struct SweepArgs {
  std::string config;
  std::string batches = "1:128";
  std::string out;
  std::string variant;
};

int cmd_sweep(const SweepArgs& a, const Common& common, std::ostream& out) {
  const auto batches = parse_batch_range(a.batches);
  const ScenarioConfig sc = load_scenario(a.config);
  sc.require_prediction_inputs();
  const SpeedupVariant variant = resolve_variant(a.variant, sc.variant);
  const SweepResult r = sweep_batch(*sc.params, *sc.arch, sc.hardware, sc.spec->draft_length,
                                    sc.spec->resolved_yield(), batches, variant);

  Printer p(out, common.full_precision);
  std::ostringstream csv;
  csv << "batch_size,speedup,target_efficiency\n";
  for (std::size_t i = 0; i < r.batch_sizes.size(); ++i) {
    csv << r.batch_sizes[i] << ',' << p.fmt(r.speedups[i]) << ','
        << p.fmt(r.target_efficiencies[i]) << '\n';
  }
  std::ostringstream summary;
  summary << "peak_speedup=" << p.fmt(r.peak_speedup) << ",peak_batch=" << r.peak_batch
          << ",robust_range=[" << r.robust_lo << ',' << r.robust_hi << ']'
          << ",robust_threshold=" << p.fmt(r.robust_threshold);
  csv << "# " << summary.str() << '\n';

  auto file = open_output(a.out);
  file << csv.str();
  finish_output(file, a.out);
  out << summary.str() << '\n';
  out << "wrote " << r.batch_sizes.size() << " rows to " << a.out << '\n';
  return kExitOk;
}

struct FitArgs {
  std::string measurements;
  std::string config;
  std::string out;
  std::int64_t stride = 1;
  std::int64_t begin = 0;
  std::uint64_t seed = 0;
  int starts = 8;
  int max_iterations = 500;
  unsigned workers = 1;
  std::string variant;
};

int cmd_fit(const FitArgs& a, const Common& common, std::ostream& out, std::ostream& err) {
  const auto all = read_measurements_csv_file(a.measurements);
  const ScenarioConfig sc = load_scenario(a.config);
  if (!sc.volume) throw InputError("config: fitting needs a volume section for the bounds");
  const auto used = stride_select(all, a.stride, a.begin);
  out << "measurements: " << all.size() << " read, " << used.size() << " used (stride "
      << a.stride << ", begin " << a.begin << ")\n";
  if (used.size() < kMinFitMeasurements) {
    throw InputError("fitting needs at least " + std::to_string(kMinFitMeasurements) +
                     " measurements, got " + std::to_string(used.size()));
  }

  const double ceiling = sc.reject_time_ceiling.value_or(
      default_reject_time_ceiling(*sc.volume, sc.hardware));
  const ParamBounds bounds = default_bounds(*sc.volume, sc.hardware, used, ceiling);

  FitConfig config;
  config.variant = resolve_variant(a.variant, sc.variant);
  config.seed = a.seed;
  config.multi_start_count = a.starts;
  config.max_iterations = a.max_iterations;
  config.workers = a.workers;
  const FitResult result = fit(used, sc.hardware, bounds, config);

  ScenarioConfig recorded = sc;
  recorded.variant = config.variant;
  const FitProvenance provenance{all.size(), used.size(), a.stride, a.begin, a.starts};
  auto file = open_output(a.out);
  file << profile_json(recorded, bounds, result, provenance);
  finish_output(file, a.out);

  Printer p(out, common.full_precision);
  p.number("mse", result.mse);
  p.number("objective", result.objective);
  p.integer("best_start", static_cast<std::int64_t>(result.best_start));
  p.integer("iterations", result.iterations);
  p.text("termination", to_string(result.termination));
  p.number("elapsed_seconds", result.elapsed_seconds);
  const auto values = result.params.to_vector();
  for (std::size_t i = 0; i < kCostParamCount; ++i) {
    p.number("param." + std::string(kCostParamNames[i]), values[static_cast<int>(i)]);
  }
  out << "wrote profile to " << a.out << '\n';
  if (!result.converged) {
    err << "warning: solver did not converge (" << to_string(result.termination)
        << "); the profile holds the best parameters found and is marked converged=false\n";
    return kExitDomainError;
  }
  return kExitOk;
}

struct ValidateArgs {
  std::string suite = "all";
  std::uint64_t seed = kDefaultValidationSeed;
  std::optional<std::int64_t> trials;
  unsigned workers = 1;
  double tamper = 1.0;
};

int cmd_validate(const ValidateArgs& a, const Common& common, std::ostream& out) {
  ValidationOptions options;
  options.seed = a.seed;
  options.trials = a.trials;
  options.workers = a.workers;
  options.analytic_scale = a.tamper;
  const ValidationReport report = run_validation(a.suite, options);
  Printer p(out, common.full_precision);
  for (const CheckResult& c : report.checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.suite << ' ' << c.name
        << " observed=" << p.fmt(c.observed) << " expected=" << p.fmt(c.expected)
        << " tolerance=" << p.fmt(c.tolerance) << " margin=" << p.fmt(c.margin) << '\n';
  }
  out << report.checks.size() << " checks, " << report.failures() << " failed (seed "
      << a.seed << ")\n";
  return report.passed() ? kExitOk : kExitSuiteFailure;
}

struct SynthArgs {
  std::string profile;
  std::string out;
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::optional<std::int64_t> experts;
  std::string k_list;
  std::string gamma_list;
  std::string batch_list;
  std::optional<double> alpha;
  std::string variant;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const Profile profile = load_profile(a.profile);
  SynthGrid grid;
  if (a.experts) grid.total_experts = *a.experts;
  if (!a.k_list.empty()) grid.active_per_token = parse_int_list(a.k_list, "--k-list");
  if (!a.gamma_list.empty()) grid.draft_lengths = parse_int_list(a.gamma_list, "--gamma-list");
  if (!a.batch_list.empty()) grid.batch_sizes = parse_int_list(a.batch_list, "--batch-list");
  if (a.alpha) grid.acceptance_rate = *a.alpha;
  const auto ms = synthesize_measurements(profile.params, profile.hardware, grid, a.noise,
                                          a.seed, resolve_variant(a.variant, profile.variant));
  auto file = open_output(a.out);
  write_measurements_csv(file, ms);
  finish_output(file, a.out);
  out << "wrote " << ms.size() << " measurements to " << a.out << '\n';
  return kExitOk;
}

}  // namespace

std::vector<std::int64_t> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<std::int64_t> values;
  for (const auto& token : split(text, ',')) {
    const auto v = parse_int(token, what);
    if (v < 1) throw InputError(what + ": values must be positive, got " + token);
    values.push_back(v);
  }
  if (values.empty()) throw InputError(what + ": empty list");
  return values;
}

std::vector<std::int64_t> parse_batch_range(const std::string& text) {
  const std::string what = "--batches";
  if (text.empty()) throw InputError(what + ": empty range");
  std::vector<std::int64_t> values;
  if (text.find(':') != std::string::npos) {
    const auto parts = split(text, ':');
    if (parts.size() != 2 && parts.size() != 3) {
      throw InputError(what + ": expected start:end or start:end:step, got '" + text + "'");
    }
    const std::int64_t start = parse_int(parts[0], what);
    const std::int64_t end = parse_int(parts[1], what);
    const std::int64_t step = parts.size() == 3 ? parse_int(parts[2], what) : 1;
    if (start < 1) throw InputError(what + ": batch sizes must be at least 1");
    if (step < 1) throw InputError(what + ": step must be at least 1");
    if (end < start) {
      throw InputError(what + ": range '" + text + "' is descending or empty");
    }
    if ((end - start) / step >= 10'000'000) throw InputError(what + ": range is too long");
    for (std::int64_t b = start; b <= end; b += step) values.push_back(b);
  } else {
    values = parse_int_list(text, what);
    for (std::size_t i = 1; i < values.size(); ++i) {
      if (values[i] <= values[i - 1]) {
        throw InputError(what + ": list '" + text + "' must be strictly increasing");
      }
    }
  }
  return values;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speculative decoding speedup model for Mixture-of-Experts inference"};
  app.name("moesd");
  app.require_subcommand(1);
  Common common;
  app.add_flag("--full-precision", common.full_precision,
               "Print numbers with round-trip exact precision instead of 6 digits");

  std::function<int()> action;

  PredictArgs predict;
  auto* sub_predict = app.add_subcommand("predict", "Speedup and time breakdown at one batch size");
  sub_predict->add_option("--config", predict.config, "Scenario JSON")->required();
  sub_predict->add_option("--batch", predict.batch, "Batch size")->required();
  sub_predict->add_option("--variant", predict.variant, "alg1 or eq2 (default: config)");
  sub_predict->callback([&] { action = [&] { return cmd_predict(predict, common, out); }; });

  SweepArgs sweep;
  auto* sub_sweep = app.add_subcommand("sweep", "Speedup curve over a range of batch sizes");
  sub_sweep->add_option("--config", sweep.config, "Scenario JSON")->required();
  sub_sweep->add_option("--batches", sweep.batches, "start:end[:step] or a,b,c")
      ->capture_default_str();
  sub_sweep->add_option("--out", sweep.out, "Output CSV")->required();
  sub_sweep->add_option("--variant", sweep.variant, "alg1 or eq2 (default: config)");
  sub_sweep->callback([&] { action = [&] { return cmd_sweep(sweep, common, out); }; });

  FitArgs fitting;
  auto* sub_fit = app.add_subcommand("fit", "Calibrate CostParams from measured speedups");
  sub_fit->add_option("--measurements", fitting.measurements, "Measurement CSV")->required();
  sub_fit->add_option("--config", fitting.config, "Scenario JSON with hardware and volume")
      ->required();
  sub_fit->add_option("--out", fitting.out, "Output profile JSON")->required();
  sub_fit->add_option("--stride", fitting.stride, "Use every Nth measurement")
      ->capture_default_str();
  sub_fit->add_option("--begin", fitting.begin, "Index of the first measurement used")
      ->capture_default_str();
  sub_fit->add_option("--seed", fitting.seed, "Seed for the multi-start draws")
      ->capture_default_str();
  sub_fit->add_option("--starts", fitting.starts, "Number of random starts")
      ->capture_default_str();
  sub_fit->add_option("--max-iterations", fitting.max_iterations, "Iterations per start")
      ->capture_default_str();
  sub_fit->add_option("--workers", fitting.workers, "Concurrent starts (0: all cores)")
      ->capture_default_str();
  sub_fit->add_option("--variant", fitting.variant, "alg1 or eq2 (default: config)");
  sub_fit->callback([&] { action = [&] { return cmd_fit(fitting, common, out, err); }; });

  ValidateArgs validate;
  auto* sub_validate = app.add_subcommand("validate", "Run the self-check suites");
  sub_validate->add_option("--suite", validate.suite, "all, activation, acceptance, roofline, fit")
      ->capture_default_str();
  sub_validate->add_option("--seed", validate.seed, "Seed")->capture_default_str();
  sub_validate->add_option("--trials", validate.trials, "Monte Carlo trials for every check");
  sub_validate->add_option("--workers", validate.workers, "Monte Carlo workers (0: all cores)")
      ->capture_default_str();
  // Negative control for the test suite: scales every analytic expectation.
  sub_validate->add_option("--tamper-analytic", validate.tamper)->group("");
  sub_validate->callback([&] { action = [&] { return cmd_validate(validate, common, out); }; });

  SynthArgs synth;
  auto* sub_synth = app.add_subcommand("synth", "Write synthetic measurements from a profile");
  sub_synth->add_option("--profile", synth.profile, "Profile JSON")->required();
  sub_synth->add_option("--out", synth.out, "Output CSV")->required();
  sub_synth->add_option("--noise", synth.noise, "Multiplicative Gaussian noise level")
      ->capture_default_str();
  sub_synth->add_option("--seed", synth.seed, "Noise seed")->capture_default_str();
  sub_synth->add_option("--experts", synth.experts, "Total experts E (default 64)");
  sub_synth->add_option("--k-list", synth.k_list, "Active experts per token (default 1,2,4,8,12,16)");
  sub_synth->add_option("--gamma-list", synth.gamma_list, "Draft lengths (default 2,4)");
  sub_synth->add_option("--batch-list", synth.batch_list, "Batch sizes (default: 19 sizes, 1 to 100)");
  sub_synth->add_option("--alpha", synth.alpha, "Acceptance rate (default 0.8)");
  sub_synth->add_option("--variant", synth.variant, "alg1 or eq2 (default: profile)");
  sub_synth->callback([&] { action = [&] { return cmd_synth(synth, out); }; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    return action ? action() : kExitInputError;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  } catch (const DomainError& e) {
    err << "model error: " << e.what() << '\n';
    return kExitDomainError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  }
}

}  // namespace moesd::cli
