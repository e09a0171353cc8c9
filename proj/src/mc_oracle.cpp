#include "moesd/mc_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>
#include <vector>

#include "moesd/errors.hpp"
#include "moesd/random.hpp"

namespace moesd {

namespace {

struct Moments {
  std::int64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }

  void merge(const Moments& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const auto total = static_cast<double>(n + o.n);
    const double d = o.mean - mean;
    mean += d * static_cast<double>(o.n) / total;
    m2 += o.m2 + d * d * static_cast<double>(n) * static_cast<double>(o.n) / total;
    n += o.n;
  }
};

// Runs `trial(rng)` options.trials times in seeded blocks and merges in order.
template <typename Trial>
McEstimate run_blocks(const McOptions& options, Trial make_trial) {
  detail::require(options.trials >= 1, "Monte Carlo needs at least one trial");
  const std::int64_t blocks = (options.trials + kTrialBlock - 1) / kTrialBlock;
  std::vector<Moments> partial(static_cast<std::size_t>(blocks));

  auto run_block = [&](std::int64_t b) {
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(b)));
    auto trial = make_trial();
    const std::int64_t begin = b * kTrialBlock;
    const std::int64_t end = std::min(options.trials, begin + kTrialBlock);
    Moments m;
    for (std::int64_t i = begin; i < end; ++i) m.add(trial(rng));
    partial[static_cast<std::size_t>(b)] = m;
  };

  unsigned workers =
      options.workers == 0 ? std::thread::hardware_concurrency() : options.workers;
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(blocks)));
  if (workers == 1) {
    for (std::int64_t b = 0; b < blocks; ++b) run_block(b);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::int64_t b = w; b < blocks; b += workers) run_block(b);
      });
    }
    for (auto& t : pool) t.join();
  }

  Moments total;
  for (const Moments& m : partial) total.merge(m);

  McEstimate e;
  e.mean = total.mean;
  e.trials = total.n;
  e.seed = options.seed;
  if (total.n > 1) {
    e.variance = total.m2 / static_cast<double>(total.n - 1);
    e.std_error = std::sqrt(e.variance / static_cast<double>(total.n));
  } else {
    e.variance = std::numeric_limits<double>::infinity();
    e.std_error = std::numeric_limits<double>::infinity();
  }
  return e;
}

// Routes tokens through top-K selection; returns distinct experts hit.
class Router {
 public:
  explicit Router(const MoEArch& arch)
      : k_(arch.active_per_token),
        order_(static_cast<std::size_t>(arch.total_experts)),
        hit_(static_cast<std::size_t>(arch.total_experts), 0) {
    std::iota(order_.begin(), order_.end(), 0);
  }

  std::int64_t route(std::int64_t tokens, Rng& rng) {
    std::fill(hit_.begin(), hit_.end(), 0);
    std::int64_t distinct = 0;
    const auto e = static_cast<std::uint64_t>(order_.size());
    for (std::int64_t t = 0; t < tokens; ++t) {
      // Partial Fisher-Yates: the first K slots become a uniform K-subset.
      for (std::int64_t j = 0; j < k_; ++j) {
        const auto uj = static_cast<std::uint64_t>(j);
        const std::uint64_t pick = uj + rng.below(e - uj);
        std::swap(order_[uj], order_[pick]);
        const auto expert = static_cast<std::size_t>(order_[uj]);
        if (!hit_[expert]) {
          hit_[expert] = 1;
          ++distinct;
        }
      }
    }
    return distinct;
  }

 private:
  std::int64_t k_;
  std::vector<std::int64_t> order_;
  std::vector<char> hit_;
};

}  // namespace

McEstimate simulate_activation(const MoEArch& arch, std::int64_t tokens,
                               const McOptions& options) {
  validate(arch);
  detail::require(tokens >= 1, "token count must be at least 1");
  return run_blocks(options, [&] {
    return [router = Router(arch), tokens](Rng& rng) mutable {
      return static_cast<double>(router.route(tokens, rng));
    };
  });
}

McEstimate simulate_expert_load(const MoEArch& arch, std::int64_t tokens,
                                const McOptions& options) {
  validate(arch);
  detail::require(tokens >= 1, "token count must be at least 1");
  const double assignments =
      static_cast<double>(tokens) * static_cast<double>(arch.active_per_token);
  return run_blocks(options, [&] {
    return [router = Router(arch), tokens, assignments](Rng& rng) mutable {
      return assignments / static_cast<double>(router.route(tokens, rng));
    };
  });
}

McEstimate simulate_acceptance(double alpha, std::int64_t draft_length,
                               const McOptions& options) {
  detail::require(alpha >= 0.0 && alpha <= 1.0, "acceptance rate must lie in [0, 1]");
  detail::require(draft_length >= 1, "draft length must be at least 1");
  return run_blocks(options, [&] {
    return [alpha, draft_length](Rng& rng) {
      std::int64_t accepted = 0;
      while (accepted < draft_length && rng.bernoulli(alpha)) ++accepted;
      return static_cast<double>(accepted + 1);
    };
  });
}

}  // namespace moesd
