#include "moesd/calibration.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>
#include <tuple>

#include <unsupported/Eigen/AutoDiff>

#include "moesd/random.hpp"
#include "moesd/speculation.hpp"

namespace moesd {

namespace {

constexpr int kN = static_cast<int>(kCostParamCount);
using Derivatives = Eigen::Matrix<double, kN, 1>;
using Dual = Eigen::AutoDiffScalar<Derivatives>;

constexpr std::size_t kLambda = 8;
constexpr std::size_t kGrowthBase = 9;

// Solver box: the parameter bounds, with s kept clear of 1.
std::pair<Eigen::VectorXd, Eigen::VectorXd> solver_box(const ParamBounds& bounds) {
  Eigen::VectorXd lo(kN);
  Eigen::VectorXd hi(kN);
  for (int i = 0; i < kN; ++i) {
    lo[i] = bounds[static_cast<std::size_t>(i)].lower;
    hi[i] = bounds[static_cast<std::size_t>(i)].upper;
  }
  lo[kGrowthBase] = std::max(lo[kGrowthBase], 1.0 + kGrowthBaseMargin);
  return {lo, hi};
}

CostParams<double> params_from(const Eigen::VectorXd& x) {
  return CostParams<double>::from_vector(x);
}

class SpeedupResiduals {
 public:
  SpeedupResiduals(std::span<const Measurement> ms, const HardwareSpec& hw,
                   SpeedupVariant variant)
      : ms_(ms), hw_(hw), variant_(variant) {}

  bool evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd* J) const {
    const auto n = static_cast<Eigen::Index>(ms_.size());
    r.resize(n);
    try {
      if (J == nullptr) {
        const CostParams<double> p = params_from(x);
        for (Eigen::Index i = 0; i < n; ++i) {
          r[i] = predict_speedup(p, hw_, ms_[i], variant_) - ms_[i].speedup;
        }
        return true;
      }
      CostParams<Dual>::Vector dual;
      for (int k = 0; k < kN; ++k) dual[k] = Dual(x[k], kN, k);
      const auto dp = CostParams<Dual>::from_vector(dual);

      J->resize(n, kN);
      for (Eigen::Index i = 0; i < n; ++i) {
        const Measurement& m = ms_[i];
        const Dual s = compute_speedup(dp, m.arch(), hw_, m.batch_size, m.draft_length,
                                       m.yield, variant_);
        r[i] = s.value() - m.speedup;
        J->row(i) = s.derivatives().transpose();
      }
    } catch (const DomainError&) {
      return false;
    }
    return true;
  }

 private:
  std::span<const Measurement> ms_;
  const HardwareSpec& hw_;
  SpeedupVariant variant_;
};

// Start point drawn uniformly over each two-sided box and log-uniformly over
// [1e-4, 10] times a reference time for the one-sided coefficients.
Eigen::VectorXd random_start(const ParamBounds& bounds, Rng& rng) {
  double ref = 0.0;
  for (std::size_t i = 0; i < kLambda; ++i) {
    if (std::isfinite(bounds[i].upper)) ref = std::max(ref, bounds[i].upper);
  }
  if (ref <= 0.0) ref = 1.0;

  Eigen::VectorXd x(kN);
  for (int i = 0; i < kN; ++i) {
    const double draw = rng.uniform();
    const Bound& b = bounds[static_cast<std::size_t>(i)];
    x[i] = std::isfinite(b.upper) ? b.lower + (b.upper - b.lower) * draw
                                  : b.lower + ref * std::pow(10.0, -4.0 + 5.0 * draw);
  }
  return x;
}

}  // namespace

void validate(const Measurement& m) {
  auto fail = [](const std::string& what) { throw InputError(what); };
  if (m.batch_size < 1) fail("batch_size must be a positive integer");
  if (m.draft_length < 1) fail("gamma must be a positive integer");
  if (m.total_experts < 1) fail("E must be a positive integer");
  if (m.active_per_token < 1 || m.active_per_token > m.total_experts) {
    fail("K must be a positive integer no larger than E");
  }
  if (!(m.yield > 0.0 && m.yield <= 1.0)) fail("sigma must lie in (0, 1]");
  if (!(m.speedup > 0.0) || !std::isfinite(m.speedup)) fail("speedup must be positive");
}

void sort_measurements(std::vector<Measurement>& ms) {
  std::stable_sort(ms.begin(), ms.end(), [](const Measurement& a, const Measurement& b) {
    return std::tie(a.active_per_token, a.draft_length, a.batch_size) <
           std::tie(b.active_per_token, b.draft_length, b.batch_size);
  });
}

bool ParamBounds::contains(const CostParams<double>& p) const {
  const auto x = p.to_vector();
  for (std::size_t i = 0; i < kCostParamCount; ++i) {
    const double v = x[static_cast<int>(i)];
    if (v < bounds[i].lower || v > bounds[i].upper) return false;
  }
  return p.s >= 1.0 + kGrowthBaseMargin;
}

void validate(const ParamBounds& b) {
  for (std::size_t i = 0; i < kCostParamCount; ++i) {
    const std::string name(kCostParamNames[i]);
    if (!(b[i].lower <= b[i].upper)) throw InputError(name + ": lower bound exceeds upper");
    if (!std::isfinite(b[i].lower)) throw InputError(name + ": lower bound must be finite");
    if (i < kLambda && b[i].lower < 0.0) throw InputError(name + ": bounds must be >= 0");
  }
  if (b[kLambda].lower < kLambdaMin || b[kLambda].upper > kLambdaMax) {
    throw InputError("lambda bounds must lie within [0.2, 1]");
  }
  if (b[kGrowthBase].lower < 1.0 || b[kGrowthBase].upper > kGrowthBaseMax ||
      b[kGrowthBase].upper < 1.0 + kGrowthBaseMargin) {
    throw InputError("s bounds must lie within (1, 2]");
  }
}

double default_reject_time_ceiling(const VolumeSpec& vol, const HardwareSpec& hw) {
  return vol.dense_param_count * vol.bytes_per_param() / hw.peak_bandwidth;
}

ParamBounds default_bounds(const VolumeSpec& vol, const HardwareSpec& hw,
                           std::span<const Measurement> measurements,
                           double reject_time_ceiling) {
  if (measurements.empty()) throw InputError("default bounds need at least one measurement");
  validate(vol);
  validate(hw);
  detail::require(std::isfinite(reject_time_ceiling) && reject_time_ceiling >= 0.0,
                  "rejection-time ceiling must be finite and >= 0");

  const double bytes = vol.bytes_per_param();
  const double bias_min = vol.dense_param_count * bytes / hw.peak_bandwidth;
  const double k2_min = vol.expert_param_count * bytes / hw.peak_bandwidth;
  const double draft_min = vol.draft_param_count * bytes / hw.peak_bandwidth;
  const double inf = std::numeric_limits<double>::infinity();

  ParamBounds b;
  b[0] = {bias_min, 5.0 * bias_min};
  b[1] = {0.0, inf};
  b[2] = {k2_min, 5.0 * k2_min};
  b[3] = {0.0, inf};
  b[4] = {draft_min, 5.0 * draft_min};
  b[5] = {0.0, inf};
  b[6] = {0.0, reject_time_ceiling};
  b[7] = {0.0, reject_time_ceiling};
  b[kLambda] = {kLambdaMin, kLambdaMax};
  b[kGrowthBase] = {1.0, kGrowthBaseMax};
  return b;
}

std::vector<Measurement> stride_select(std::span<const Measurement> measurements,
                                       std::int64_t stride, std::int64_t begin) {
  if (stride < 1) throw InputError("stride must be at least 1");
  const auto total = static_cast<std::int64_t>(measurements.size());
  if (begin < 0 || begin >= total) {
    throw InputError("begin offset " + std::to_string(begin) + " is outside [0, " +
                     std::to_string(total) + ")");
  }
  std::vector<Measurement> out;
  out.reserve(static_cast<std::size_t>((total - begin + stride - 1) / stride));
  for (std::int64_t i = begin; i < total; i += stride) {
    out.push_back(measurements[static_cast<std::size_t>(i)]);
  }
  return out;
}

double predict_speedup(const CostParams<double>& p, const HardwareSpec& hw,
                       const Measurement& m, SpeedupVariant variant) {
  return compute_speedup(p, m.arch(), hw, m.batch_size, m.draft_length, m.yield, variant);
}

Eigen::VectorXd residuals(const CostParams<double>& p, const HardwareSpec& hw,
                          std::span<const Measurement> measurements,
                          SpeedupVariant variant) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(measurements.size()));
  for (std::size_t i = 0; i < measurements.size(); ++i) {
    r[static_cast<Eigen::Index>(i)] =
        predict_speedup(p, hw, measurements[i], variant) - measurements[i].speedup;
  }
  return r;
}

double objective(const CostParams<double>& p, const HardwareSpec& hw,
                 std::span<const Measurement> measurements, SpeedupVariant variant) {
  return 0.5 * residuals(p, hw, measurements, variant).squaredNorm();
}

double mean_squared_error(const CostParams<double>& p, const HardwareSpec& hw,
                          std::span<const Measurement> measurements,
                          SpeedupVariant variant) {
  if (measurements.empty()) throw InputError("no measurements");
  return residuals(p, hw, measurements, variant).squaredNorm() /
         static_cast<double>(measurements.size());
}

FitResult fit(std::span<const Measurement> measurements, const HardwareSpec& hw,
              const ParamBounds& bounds, const FitConfig& config) {
  if (measurements.size() < kMinFitMeasurements) {
    throw InputError("fitting needs at least " + std::to_string(kMinFitMeasurements) +
                     " measurements, got " + std::to_string(measurements.size()));
  }
  for (const Measurement& m : measurements) validate(m);
  validate(bounds);
  validate(hw);
  if (config.multi_start_count < 1) throw InputError("multi_start_count must be >= 1");
  if (config.max_iterations < 1) throw InputError("max_iterations must be >= 1");

  const auto started = std::chrono::steady_clock::now();
  const SpeedupResiduals problem(measurements, hw, config.variant);
  const auto [lo, hi] = solver_box(bounds);

  BoxLeastSquaresOptions options;
  options.max_iterations = config.max_iterations;
  options.function_tolerance = config.tolerance;
  options.step_tolerance = config.tolerance;
  options.gradient_tolerance = config.tolerance;

  const auto count = static_cast<std::size_t>(config.multi_start_count);
  Rng rng(config.seed);
  std::vector<Eigen::VectorXd> initial(count);
  for (auto& u : initial) u = random_start(bounds, rng);

  std::vector<BoxLeastSquaresSummary> summaries(count);
  auto run = [&](std::size_t i) {
    summaries[i] = solve_box_least_squares(problem, initial[i], lo, hi, options);
  };
  unsigned workers = config.workers == 0 ? std::thread::hardware_concurrency() : config.workers;
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(count)));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < count; i += workers) run(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  FitResult result;
  result.seed = config.seed;
  result.starts.resize(count);
  std::size_t best = 0;
  for (std::size_t i = 0; i < count; ++i) {
    StartOutcome& s = result.starts[i];
    s.initial = params_from(initial[i]);
    s.initial_objective = summaries[i].initial_cost;
    s.final_objective = summaries[i].cost;
    s.iterations = summaries[i].iterations;
    s.termination = summaries[i].termination;
    // Ties resolve to the lower start index.
    if (summaries[i].cost < summaries[best].cost) best = i;
  }

  const BoxLeastSquaresSummary& winner = summaries[best];
  result.best_start = best;
  result.params = params_from(winner.x);
  result.residuals = residuals(result.params, hw, measurements, config.variant);
  result.objective = 0.5 * result.residuals.squaredNorm();
  result.mse = result.residuals.squaredNorm() / static_cast<double>(measurements.size());
  result.iterations = winner.iterations;
  result.termination = winner.termination;
  result.converged = winner.converged();
  result.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

std::vector<Measurement> synthesize_measurements(const CostParams<double>& truth,
                                                 const HardwareSpec& hw,
                                                 const SynthGrid& grid, double noise,
                                                 std::uint64_t seed,
                                                 SpeedupVariant variant) {
  if (grid.active_per_token.empty() || grid.draft_lengths.empty() ||
      grid.batch_sizes.empty()) {
    throw InputError("synthesis grid lists must be nonempty");
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw InputError("noise must be >= 0");
  if (grid.acceptance_rate < 0.0 || grid.acceptance_rate > 1.0) {
    throw InputError("acceptance rate must lie in [0, 1]");
  }
  validate(MoEArch{grid.total_experts, *std::max_element(grid.active_per_token.begin(),
                                                          grid.active_per_token.end())});
  validate(truth);

  std::vector<Measurement> out;
  out.reserve(grid.active_per_token.size() * grid.draft_lengths.size() *
              grid.batch_sizes.size());
  for (const auto k : grid.active_per_token) {
    for (const auto g : grid.draft_lengths) {
      const double sigma = sigma_from_alpha(grid.acceptance_rate, g);
      for (const auto b : grid.batch_sizes) {
        Measurement m{b, g, k, grid.total_experts, sigma, 0.0};
        m.speedup = predict_speedup(truth, hw, m, variant);
        out.push_back(m);
      }
    }
  }
  sort_measurements(out);

  if (noise > 0.0) {
    Rng rng(seed);
    for (Measurement& m : out) {
      m.speedup *= 1.0 + noise * rng.normal();
      detail::require(m.speedup > 0.0, "noise drove a synthetic speedup to zero");
    }
  }
  for (const Measurement& m : out) validate(m);
  return out;
}

}  // namespace moesd
