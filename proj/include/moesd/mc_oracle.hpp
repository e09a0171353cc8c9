#pragma once

#include <cstdint>

#include "moesd/expert_stats.hpp"

// Monte Carlo estimates of the routing and acceptance processes, computed by
// simulation only so they can check the closed forms independently.
//
// Trials run in blocks of kTrialBlock. Block b draws from std::mt19937_64
// seeded with derive_seed(seed, b) (SplitMix64 mixing), and block moments are
// merged in block order, so an estimate depends only on (inputs, trials, seed)
// and never on how blocks are spread across workers.

namespace moesd {

inline constexpr std::int64_t kTrialBlock = 4096;

struct McEstimate {
  double mean = 0.0;
  double variance = 0.0;   // unbiased sample variance
  double std_error = 0.0;  // sqrt(variance / trials); +inf for a single trial
  std::int64_t trials = 0;
  std::uint64_t seed = 0;
};

struct McOptions {
  std::int64_t trials = 100000;
  std::uint64_t seed = 0;
  unsigned workers = 1;  // 0 picks hardware concurrency
};

/// Distinct experts hit when each of `tokens` tokens picks K of E uniformly
/// without replacement.
McEstimate simulate_activation(const MoEArch& arch, std::int64_t tokens,
                               const McOptions& options);

/// tokens * K / (distinct experts hit), averaged per trial. This estimates
/// E[tK / N], which sits slightly above the closed form tK / E[N].
McEstimate simulate_expert_load(const MoEArch& arch, std::int64_t tokens,
                                const McOptions& options);

/// Tokens emitted per round: the accepted prefix of `draft_length` drafts,
/// each accepted with probability alpha, plus the bonus token.
McEstimate simulate_acceptance(double alpha, std::int64_t draft_length,
                               const McOptions& options);

}  // namespace moesd
