#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "moesd/cost_model.hpp"
#include "moesd/errors.hpp"
#include "moesd/random.hpp"
#include "moesd/speculation.hpp"

using namespace moesd;

namespace {

const HardwareSpec kHw{1e14, 1e12, 1, "rp100"};  // ridge point 100
const MoEArch kArch{64, 8};

CostParams<double> only(double CostParams<double>::*field, double value) {
  CostParams<double> p;
  p.lambda = 1.0;
  p.s = 1.01;
  p.*field = value;
  return p;
}

CostParams<double> worked_example() {
  return CostParams<double>{1.0, 0.5, 0.01, 0.2, 0.05, 0.02, 0.01, 0.001, 1.0, 1.01};
}

}  // namespace

TEST_CASE("single-term forward times") {
  CHECK(ar_forward_time(only(&CostParams<double>::bias, 1.0), kArch, kHw, 7).total() == 1.0);
  CHECK(ar_forward_time(only(&CostParams<double>::k2, 1.0), kArch, kHw, 1).total() ==
        doctest::Approx(8.0).epsilon(1e-14));
  CHECK(verify_forward_time(only(&CostParams<double>::k2, 1.0), kArch, kHw, 4, 4).total() ==
        doctest::Approx(56.44370643064008).epsilon(1e-13));
  CHECK(draft_forward_time(only(&CostParams<double>::draft_bias, 0.1), kHw, 64) == 0.1);
  for (std::int64_t b : {1, 10, 50, 100}) {
    CHECK(draft_forward_time(only(&CostParams<double>::draft_k, 1.0), kHw, b) ==
          doctest::Approx(std::pow(1.01, static_cast<double>(b))).epsilon(1e-14));
  }
  CostParams<double> rej;
  rej.reject_bias = 0.01;
  rej.reject_k = 0.001;
  CHECK(reject_time(rej, 10) == doctest::Approx(0.02).epsilon(1e-14));
}

TEST_CASE("draft time example on both sides of the transition") {
  CostParams<double> p;
  p.draft_bias = 0.05;
  p.draft_k = 0.02;
  p.lambda = 1.0;
  p.s = 1.01;
  CHECK(draft_forward_time(p, kHw, 32) == doctest::Approx(0.07749881357062194).epsilon(1e-14));
  CHECK(draft_forward_time(p, kHw, 150) ==
        doctest::Approx(0.05 + 0.02 * 4.0505034543699622).epsilon(1e-14));
}

TEST_CASE("worked example against precomputed values") {
  const auto p = worked_example();
  const auto b = forward_breakdown(p, kArch, kHw, 16, 4);
  CHECK(b.ar_time() == doctest::Approx(2.3552906540182331).epsilon(1e-13));
  CHECK(b.verify_time() == doctest::Approx(2.8016812623390681).epsilon(1e-13));
  CHECK(b.n_ar() == doctest::Approx(56.44370643064008).epsilon(1e-14));
  CHECK(b.t_ar() == doctest::Approx(16.0 * 8.0 / 56.44370643064008).epsilon(1e-14));
  CHECK(b.ar.fixed == 1.0);
  CHECK(b.ar.total() ==
        doctest::Approx(b.ar.fixed + b.ar.dense_growth + b.ar.expert_loading + b.ar.expert_growth));

  const double sigma = sigma_from_alpha(0.8, 4);
  CHECK(sigma == doctest::Approx(0.67232).epsilon(1e-14));
  CHECK(compute_speedup(p, kArch, kHw, 16, 4, sigma, SpeedupVariant::alg1) ==
        doctest::Approx(1.5062608784720824).epsilon(1e-13));
  CHECK(compute_speedup(p, kArch, kHw, 16, 4, sigma, SpeedupVariant::eq2) ==
        doctest::Approx(2.5364653633079092).epsilon(1e-13));
  CHECK(target_efficiency(p, kArch, kHw, 16, 4) ==
        doctest::Approx(0.84067045230257480).epsilon(1e-13));
}

TEST_CASE("verify with one draft token is the autoregressive pass") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    CostParams<double> p{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform(),
                         0.1, 0.1, 0.0, 0.0, 0.2 + 0.8 * rng.uniform(), 1.0 + rng.uniform()};
    const auto b = static_cast<std::int64_t>(1 + rng.below(256));
    CHECK(verify_forward_time(p, kArch, kHw, b, 1).total() ==
          ar_forward_time(p, kArch, kHw, b).total());
    CHECK(target_efficiency(p, kArch, kHw, b, 1) == 1.0);
  }
}

TEST_CASE("ideal speedup limits") {
  CostParams<double> p;
  p.bias = 1.0;
  ForwardBreakdown<double> b = forward_breakdown(p, kArch, kHw, 8, 3);
  CHECK(b.draft_time == 0.0);
  CHECK(b.reject_time == 0.0);
  CHECK(speedup_from_breakdown(b, 3, 1.0, SpeedupVariant::alg1) == doctest::Approx(2.0));
  CHECK(speedup_from_breakdown(b, 3, 1.0, SpeedupVariant::eq2) == doctest::Approx(4.0));
}

TEST_CASE("common time scaling leaves speedup unchanged") {
  Rng rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = worked_example();
    const double factor = std::exp(6.0 * rng.uniform() - 3.0);
    const auto b = static_cast<std::int64_t>(1 + rng.below(200));
    const double base = compute_speedup(p, kArch, kHw, b, 4, 0.7);
    CHECK(compute_speedup(p.scaled_times(factor), kArch, kHw, b, 4, 0.7) ==
          doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("autodiff gradient matches finite differences") {
  using Ad = Eigen::AutoDiffScalar<Eigen::Matrix<double, 10, 1>>;
  auto p = worked_example();
  p.lambda = 0.9;  // interior, so central differences stay in the domain
  CostParams<Ad>::Vector v;
  const auto x = p.to_vector();
  for (int i = 0; i < 10; ++i) v[i] = Ad(x[i], 10, i);
  for (std::int64_t b : {4, 16, 90, 200}) {
    const Ad s = compute_speedup(CostParams<Ad>::from_vector(v), kArch, kHw, b, 4, 0.7);
    CHECK(s.value() == doctest::Approx(compute_speedup(p, kArch, kHw, b, 4, 0.7)));
    for (int i = 0; i < 10; ++i) {
      const double h = 1e-7 * std::max(1e-3, std::abs(x[i]));
      auto up = x;
      auto down = x;
      up[i] += h;
      down[i] -= h;
      const double fd = (compute_speedup(CostParams<double>::from_vector(up), kArch, kHw, b, 4, 0.7) -
                         compute_speedup(CostParams<double>::from_vector(down), kArch, kHw, b, 4, 0.7)) /
                        (2.0 * h);
      CHECK(s.derivatives()[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-6));
    }
  }
}

TEST_CASE("parameter validation") {
  auto p = worked_example();
  p.lambda = 0.1;
  CHECK_THROWS_AS(compute_speedup(p, kArch, kHw, 4, 4, 0.7), DomainError);
  p = worked_example();
  p.s = 1.0;
  CHECK_THROWS_AS(compute_speedup(p, kArch, kHw, 4, 4, 0.7), DomainError);
  p = worked_example();
  p.k2 = -1.0;
  CHECK_THROWS_AS(compute_speedup(p, kArch, kHw, 4, 4, 0.7), DomainError);
  CHECK_THROWS_AS(compute_speedup(worked_example(), kArch, kHw, 0, 4, 0.7), DomainError);
  CHECK_THROWS_AS(compute_speedup(worked_example(), kArch, kHw, 4, 0, 0.7), DomainError);
  CHECK_THROWS_AS(compute_speedup(worked_example(), kArch, kHw, 4, 4, 0.0), DomainError);
  CHECK_THROWS_AS(compute_speedup(CostParams<double>{}, kArch, kHw, 4, 4, 0.7), DomainError);
}

TEST_CASE("variant names") {
  CHECK(parse_variant("alg1") == SpeedupVariant::alg1);
  CHECK(parse_variant("eq2") == SpeedupVariant::eq2);
  CHECK_FALSE(parse_variant("other").has_value());
  CHECK(to_string(SpeedupVariant::eq2) == "eq2");
}

TEST_CASE("batch sweep on an FFN-dominated profile") {
  const CostParams<double> p{0.001, 2e-5, 0.0015, 0.0005, 0.0003, 1e-5, 1e-4, 2e-6, 0.5, 1.08};
  const HardwareSpec hw{6.24e14, 4e12, 1, ""};
  std::vector<std::int64_t> batches(128);
  std::iota(batches.begin(), batches.end(), 1);
  const auto r = sweep_batch(p, MoEArch{64, 8}, hw, 4, sigma_from_alpha(0.8, 4), batches);
  REQUIRE(r.speedups.size() == 128);
  CHECK(r.peak_batch == 18);
  CHECK(r.robust_lo == 5);
  CHECK(r.robust_hi == 57);
  CHECK(r.robust_threshold == doctest::Approx(r.peak_speedup / std::sqrt(2.0)));
  for (std::size_t i = 0; i < r.speedups.size(); ++i) {
    CHECK(r.speedups[i] <= r.peak_speedup);
    const bool inside = r.batch_sizes[i] >= r.robust_lo && r.batch_sizes[i] <= r.robust_hi;
    CHECK(inside == (r.speedups[i] >= r.robust_threshold));
  }
  const std::vector<std::int64_t> descending{4, 2};
  CHECK_THROWS_AS(sweep_batch(p, MoEArch{64, 8}, hw, 4, 0.7, descending), InputError);
  CHECK_THROWS_AS(sweep_batch(p, MoEArch{64, 8}, hw, 4, 0.7, std::vector<std::int64_t>{}),
                  InputError);
}

TEST_CASE("per-token speedup") {
  CHECK(per_token_speedup(10.0, 4.0) == 2.5);
  CHECK_THROWS_AS(per_token_speedup(0.0, 1.0), DomainError);
}
