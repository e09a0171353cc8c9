// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Criteria 1-5 and 9 group the checks of the validation suites;
// 6-8 are computed here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "moesd/calibration.hpp"
#include "moesd/cost_model.hpp"
#include "moesd/speculation.hpp"
#include "moesd/validation.hpp"

using namespace moesd;

namespace {

struct Verdict {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return buf;
}

// Collects the checks whose name starts with one of `prefixes`.
Verdict from_checks(const ValidationReport& report, std::vector<std::string_view> prefixes) {
  std::size_t count = 0;
  std::size_t failed = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  for (const auto& c : report.checks) {
    bool match = false;
    for (auto p : prefixes) match = match || std::string_view(c.name).starts_with(p);
    if (!match) continue;
    ++count;
    failed += c.passed ? 0 : 1;
    worst_margin = std::min(worst_margin, c.margin);
  }
  Verdict v;
  v.passed = count > 0 && failed == 0;
  v.detail = std::to_string(count) + " checks, " + std::to_string(failed) +
             " failed, smallest margin " + fmt("%.3g", worst_margin);
  return v;
}

Verdict calibration_round_trip() {
  const auto ref = calibration_reference();
  const SynthGrid grid;
  const auto clean = synthesize_measurements(ref.truth, ref.hardware, grid, 0.0, 0);
  if (clean.size() != 228) return {false, "grid has " + std::to_string(clean.size()) + " rows"};

  const double ceiling = default_reject_time_ceiling(ref.volume, ref.hardware);
  FitConfig config;
  config.seed = kDefaultValidationSeed;

  // Noiseless: fit on the stride-11 subset, score on every point.
  const auto used = stride_select(clean, 11, 0);
  const auto bounds = default_bounds(ref.volume, ref.hardware, used, ceiling);
  const auto noiseless = fit(used, ref.hardware, bounds, config);
  double worst_rel = 0.0;
  double sq = 0.0;
  for (const auto& m : clean) {
    const double pred = predict_speedup(noiseless.params, ref.hardware, m);
    worst_rel = std::max(worst_rel, std::abs(pred - m.speedup) / m.speedup);
    sq += (pred - m.speedup) * (pred - m.speedup);
  }
  const double mse_clean = sq / static_cast<double>(clean.size());

  // 1% multiplicative noise: MSE against the noisy observations, compared with
  // the expected squared noise E[(0.01 * true)^2].
  const double noise = 0.01;
  const auto noisy = synthesize_measurements(ref.truth, ref.hardware, grid, noise,
                                             kDefaultValidationSeed);
  const auto noisy_used = stride_select(noisy, 11, 0);
  const auto noisy_fit = fit(noisy_used, ref.hardware,
                             default_bounds(ref.volume, ref.hardware, noisy_used, ceiling), config);
  double floor = 0.0;
  for (const auto& m : clean) floor += (noise * m.speedup) * (noise * m.speedup);
  floor /= static_cast<double>(clean.size());
  const double mse_noisy = mean_squared_error(noisy_fit.params, ref.hardware, noisy);

  const double per_start =
      std::max(noiseless.elapsed_seconds, noisy_fit.elapsed_seconds) / config.multi_start_count;

  Verdict v;
  v.passed = noiseless.converged && worst_rel <= 0.01 && mse_clean <= 1e-4 &&
             mse_noisy <= 3.0 * floor && per_start <= 5.0;
  v.detail = fmt("noiseless max rel err %.3g, mse %.3g; ", worst_rel, mse_clean) +
             fmt("noisy mse %.3g vs 3 x floor %.3g; ", mse_noisy, 3.0 * floor) +
             fmt("%.3g s per start", per_start);
  return v;
}

Verdict table_ratios() {
  struct Row {
    double ar, sd, published;
  };
  const Row rows[] = {{15.96, 6.96, 2.29}, {15.93, 7.31, 2.18}};
  Verdict v{true, ""};
  for (const auto& r : rows) {
    const double x = per_token_speedup(r.ar, r.sd);
    v.passed = v.passed && std::abs(x - r.published) <= 0.01;
    v.detail += fmt("%.2f/%.2f -> %.4f ", r.ar, r.sd, x);
  }
  return v;
}

bool unimodal(const std::vector<double>& y) {
  const auto peak = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
  for (std::size_t i = 1; i <= peak; ++i) {
    if (y[i] < y[i - 1]) return false;
  }
  for (std::size_t i = peak + 1; i < y.size(); ++i) {
    if (y[i] > y[i - 1]) return false;
  }
  return true;
}

Verdict qualitative_trends() {
  const HardwareSpec hw = calibration_reference().hardware;
  const double sigma = sigma_from_alpha(0.8, 4);
  std::vector<std::int64_t> batches(128);
  std::iota(batches.begin(), batches.end(), 1);

  const CostParams<double> ffn{0.001, 2e-5, 0.0015, 0.0005, 0.0003, 1e-5, 1e-4, 2e-6, 0.5, 1.08};
  Verdict v{true, ""};
  std::int64_t prev_peak = 0;
  std::int64_t prev_width = 0;
  for (std::int64_t k : {16, 8, 4}) {
    const auto r = sweep_batch(ffn, MoEArch{64, k}, hw, 4, sigma, batches);
    const std::int64_t width = r.robust_hi - r.robust_lo;
    v.passed = v.passed && unimodal(r.speedups) && r.peak_batch >= prev_peak && width >= prev_width;
    v.detail += "K=" + std::to_string(k) + " peak B=" + std::to_string(r.peak_batch) +
                " range [" + std::to_string(r.robust_lo) + "," + std::to_string(r.robust_hi) +
                "]" + (unimodal(r.speedups) ? "" : " NOT UNIMODAL") + "; ";
    prev_peak = r.peak_batch;
    prev_width = width;
  }

  const CostParams<double> attention{0.02, 1e-3, 0.0004, 0.0, 0.0003, 1e-5, 1e-4, 2e-6, 0.2, 1.05};
  for (std::int64_t k : {1, 2}) {
    const auto r = sweep_batch(attention, MoEArch{64, k}, hw, 4, sigma, batches);
    bool nonincreasing = true;
    for (std::size_t i = 1; i < r.speedups.size(); ++i) {
      nonincreasing = nonincreasing && r.speedups[i] <= r.speedups[i - 1];
    }
    v.passed = v.passed && nonincreasing;
    v.detail += "attention K=" + std::to_string(k) +
                (nonincreasing ? " nonincreasing; " : " NOT nonincreasing; ");
  }
  return v;
}

}  // namespace

int main() {
  ValidationOptions options;
  options.workers = 0;
  const auto t0 = std::chrono::steady_clock::now();
  const auto activation = run_validation("activation", options);
  const auto acceptance = run_validation("acceptance", options);
  const auto roofline = run_validation("roofline", options);

  struct Criterion {
    const char* title;
    std::function<Verdict()> run;
  };
  const Criterion criteria[] = {
      {"activation formula vs routing simulation",
       [&] { return from_checks(activation, {"experts"}); }},
      {"yield formula vs acceptance simulation",
       [&] { return from_checks(acceptance, {"tokens"}); }},
      {"mean load and gradient bound monotonicity",
       [&] { return from_checks(roofline, {"load_increasing", "log_gradient_bound"}); }},
      {"growth curve continuity",
       [&] { return from_checks(roofline, {"growth_"}); }},
      {"saturation threshold correctness",
       [&] { return from_checks(roofline, {"threshold"}); }},
      {"calibration round trip", calibration_round_trip},
      {"published per-token ratio consistency", table_ratios},
      {"qualitative batch-size trends", qualitative_trends},
      {"target efficiency limits",
       [&] { return from_checks(roofline, {"efficiency"}); }},
  };

  int failures = 0;
  int index = 1;
  for (const auto& c : criteria) {
    const Verdict v = c.run();
    failures += v.passed ? 0 : 1;
    std::printf("%s criterion %d: %s (%s)\n", v.passed ? "PASS" : "FAIL", index++, c.title,
                v.detail.c_str());
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%d of 9 criteria passed in %.1f s (seed %llu)\n", 9 - failures, elapsed,
              static_cast<unsigned long long>(options.seed));
  return failures == 0 ? 0 : 1;
}
