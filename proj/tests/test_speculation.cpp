#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "moesd/errors.hpp"
#include "moesd/random.hpp"
#include "moesd/speculation.hpp"

using namespace moesd;

TEST_CASE("yield examples") {
  CHECK(sigma_from_alpha(0.8, 3) == doctest::Approx(0.738).epsilon(1e-14));
  CHECK(sigma_from_alpha(0.0, 4) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(sigma_from_alpha(1.0, 7) == 1.0);
}

TEST_CASE("acceptance rate from yield") {
  CHECK(alpha_from_sigma(0.9, 4) == doctest::Approx(0.9472945702352834).epsilon(1e-12));
  CHECK(alpha_from_sigma(1.0, 3) == 1.0);
  CHECK(alpha_from_sigma(0.2, 4) == 0.0);
  CHECK_THROWS_AS(alpha_from_sigma(0.1, 4), DomainError);
  CHECK_THROWS_AS(alpha_from_sigma(1.1, 4), DomainError);
}

TEST_CASE("yield and acceptance rate round trip") {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const double alpha = rng.uniform();
    const auto gamma = static_cast<std::int64_t>(1 + rng.below(12));
    const double sigma = sigma_from_alpha(alpha, gamma);
    CHECK(sigma >= minimum_yield(gamma) - 1e-15);
    CHECK(sigma <= 1.0);
    CHECK(std::abs(alpha_from_sigma(sigma, gamma) - alpha) <= 1e-9);
  }
}

TEST_CASE("yield is monotone in the acceptance rate") {
  for (std::int64_t gamma = 1; gamma <= 8; ++gamma) {
    double previous = 0.0;
    for (int i = 0; i <= 100; ++i) {
      const double sigma = sigma_from_alpha(i / 100.0, gamma);
      CHECK(sigma >= previous);
      previous = sigma;
    }
  }
}

TEST_CASE("tokens per round") {
  SpecConfig cfg;
  cfg.draft_length = 3;
  cfg.acceptance_rate = 0.8;
  CHECK(expected_tokens_per_round(cfg) == doctest::Approx(2.952).epsilon(1e-14));
  cfg.acceptance_rate = 0.0;
  CHECK(expected_tokens_per_round(cfg) == doctest::Approx(1.0).epsilon(1e-15));
  cfg.acceptance_rate = 1.0;
  CHECK(expected_tokens_per_round(cfg) == 4.0);
}

TEST_CASE("spec config validation") {
  SpecConfig cfg;
  cfg.draft_length = 4;
  CHECK_THROWS_AS(validate(cfg), DomainError);
  cfg.yield = 0.5;
  CHECK_NOTHROW(validate(cfg));
  cfg.acceptance_rate = 0.5;
  CHECK_THROWS_AS(validate(cfg), DomainError);
  cfg.acceptance_rate = alpha_from_sigma(0.5, 4);
  CHECK_NOTHROW(validate(cfg));
  cfg.yield = 0.1;
  cfg.acceptance_rate.reset();
  CHECK_THROWS_AS(validate(cfg), DomainError);
  cfg.yield = 0.5;
  cfg.draft_length = 0;
  CHECK_THROWS_AS(validate(cfg), DomainError);
}
