#include <algorithm>

#include "moesd/cost_model.hpp"

namespace moesd {

SweepResult sweep_batch(const CostParams<double>& p, const MoEArch& arch,
                        const HardwareSpec& hw, std::int64_t draft_length, double yield,
                        std::span<const std::int64_t> batch_sizes,
                        SpeedupVariant variant) {
  if (batch_sizes.empty()) throw InputError("batch list is empty");
  for (std::size_t i = 1; i < batch_sizes.size(); ++i) {
    if (batch_sizes[i] <= batch_sizes[i - 1]) {
      throw InputError("batch list must be strictly increasing");
    }
  }

  SweepResult r;
  r.batch_sizes.assign(batch_sizes.begin(), batch_sizes.end());
  r.speedups.reserve(batch_sizes.size());
  r.target_efficiencies.reserve(batch_sizes.size());
  for (const std::int64_t b : batch_sizes) {
    const auto breakdown = forward_breakdown(p, arch, hw, b, draft_length);
    r.speedups.push_back(speedup_from_breakdown(breakdown, draft_length, yield, variant));
    r.target_efficiencies.push_back(breakdown.ar_time() / breakdown.verify_time());
  }

  // First maximum wins on ties.
  const auto peak = static_cast<std::size_t>(
      std::max_element(r.speedups.begin(), r.speedups.end()) - r.speedups.begin());
  r.peak_speedup = r.speedups[peak];
  r.peak_batch = r.batch_sizes[peak];
  r.robust_threshold = r.peak_speedup * kRobustFraction;

  std::size_t lo = peak;
  while (lo > 0 && r.speedups[lo - 1] >= r.robust_threshold) --lo;
  std::size_t hi = peak;
  while (hi + 1 < r.speedups.size() && r.speedups[hi + 1] >= r.robust_threshold) ++hi;
  r.robust_lo = r.batch_sizes[lo];
  r.robust_hi = r.batch_sizes[hi];
  return r;
}

}  // namespace moesd
