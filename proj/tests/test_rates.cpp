#include <doctest.h>

#include <cmath>
#include <vector>

#include "qfluct/errors.hpp"
#include "qfluct/rates.hpp"
#include "qfluct/rng.hpp"

using namespace qfluct;

TEST_CASE("censoring correction inverts the thinning identity") {
  // raw = nu exp(-tau_min nu) with nu = 1, tau_min = 0.1.
  const double raw = std::exp(-0.1);
  CHECK(correct_censored_rate(raw, 0.1) == doctest::Approx(1.0).epsilon(1e-9));
  // Round trips across the usable branch.
  for (const double nu_tau : {0.05, 0.1, 0.3, 0.5}) {
    const double nu = 40.0, tau = nu_tau / nu;
    const double thinned = nu * std::exp(-tau * nu);
    CHECK(correct_censored_rate(thinned, tau) == doctest::Approx(nu).epsilon(1e-9));
  }
  // tau_min = 0 is the identity.
  CHECK(correct_censored_rate(7.5, 0.0) == doctest::Approx(7.5));
  CHECK(correct_censored_rate(0.0, 0.1) == 0.0);
  // Beyond raw * tau * e = 1 there is no solution on the branch.
  CHECK_THROWS_AS(correct_censored_rate(11.0, 0.1), NumericalError);
}

TEST_CASE("transition and dwell bookkeeping on a hand path") {
  // States at 1 s spacing: 0 0 1 1 1 0 0 1. Up transitions (0->1) at the
  // pairs (1,2) and (6,7); down at (4,5). Dwell attribution by the state
  // of the earlier sample: state 0 holds pairs (0,1),(1,2),(5,6),(6,7)
  // = 4 s; state 1 holds (2,3),(3,4),(4,5) = 3 s.
  const std::vector<signed char> s = {0, 0, 1, 1, 1, 0, 0, 1};
  std::vector<double> t(8);
  for (int i = 0; i < 8; ++i) t[i] = i;
  const std::vector<uint32_t> flags(8, 0);
  const RateSummary r =
      switching_rates(s.data(), t.data(), flags.data(), 8, 0.0, 100.0);
  CHECK(r.up.transitions == 2);
  CHECK(r.down.transitions == 1);
  CHECK(r.up.dwell_s == doctest::Approx(4.0));
  CHECK(r.down.dwell_s == doctest::Approx(3.0));
  CHECK(r.up.raw == doctest::Approx(2.0 / 4.0));
  CHECK(r.down.raw == doctest::Approx(1.0 / 3.0));
  CHECK(r.up.correctable);
  // tau_min = 0: corrected equals raw.
  CHECK(r.up.corrected == doctest::Approx(r.up.raw));
}

TEST_CASE("masked points and gaps drop their pairs") {
  const std::vector<signed char> s = {0, 1, 0, 0, 1, 1, 0};
  // A gap of 1000 s sits between samples 4 and 5 (median step 1 s).
  const std::vector<double> t = {0, 1, 2, 3, 4, 1004, 1005};
  std::vector<uint32_t> flags(7, 0);
  flags[2] = kFlagMasked;
  // Pairs (1,2) and (2,3) are masked out, (4,5) is a gap. Remaining
  // pairs: (0,1) up, (3,4) up, (5,6) down. Dwell: state 0 holds (0,1)
  // and (3,4) = 2 s; state 1 holds (5,6) = 1 s.
  const RateSummary r =
      switching_rates(s.data(), t.data(), flags.data(), 7, 0.0, 10.0);
  CHECK(r.up.transitions == 2);
  CHECK(r.down.transitions == 1);
  CHECK(r.up.dwell_s == doctest::Approx(2.0));
  CHECK(r.down.dwell_s == doctest::Approx(1.0));
}

TEST_CASE("poisson intervals follow the 1.96 over sqrt N rule") {
  const std::vector<signed char> s = {0, 1, 0, 1, 0, 1, 0, 1, 0};
  std::vector<double> t(9);
  for (int i = 0; i < 9; ++i) t[i] = i;
  const std::vector<uint32_t> flags(9, 0);
  const RateSummary r =
      switching_rates(s.data(), t.data(), flags.data(), 9, 0.0, 100.0);
  REQUIRE(r.up.transitions == 4);
  const double rel = 1.96 / std::sqrt(4.0);
  CHECK(r.up.raw_ci_lo == doctest::Approx(r.up.raw * (1.0 - rel)));
  CHECK(r.up.raw_ci_hi == doctest::Approx(r.up.raw * (1.0 + rel)));
}

TEST_CASE("upper interval saturates at the sampling limit") {
  // raw = 1.0 from 4 transitions sits just inside the invertible branch
  // for tau_min = 0.35, but raw * (1 + 1.96/2) = 1.98 leaves it: the
  // upper endpoint pins to 1/tau_min instead of failing.
  const std::vector<signed char> s = {0, 1, 0, 1, 0, 1, 0, 1, 0};
  std::vector<double> t(9);
  for (int i = 0; i < 9; ++i) t[i] = i;
  const std::vector<uint32_t> flags(9, 0);
  const double tau_min = 0.35;
  const RateSummary r =
      switching_rates(s.data(), t.data(), flags.data(), 9, tau_min, 100.0);
  REQUIRE(r.up.correctable);
  CHECK(r.up.corrected > r.up.raw);
  CHECK(r.up.corrected_ci_hi == doctest::Approx(1.0 / tau_min));
}

TEST_CASE("uncorrectable raw rates are reported, not corrected") {
  // Alternating every sample: raw = 1 per 1 s dwell per direction, with
  // tau_min = 1 -> raw * tau * e = e > 1.
  std::vector<signed char> s(64);
  for (int i = 0; i < 64; ++i) s[i] = static_cast<signed char>(i % 2);
  std::vector<double> t(64);
  for (int i = 0; i < 64; ++i) t[i] = i;
  const std::vector<uint32_t> flags(64, 0);
  const RateSummary r =
      switching_rates(s.data(), t.data(), flags.data(), 64, 1.0, 100.0);
  CHECK_FALSE(r.up.correctable);
  CHECK(r.up.raw > 0.0);
}

TEST_CASE("censored telegraph rates are recovered within five percent") {
  // Continuous telegraph with nu = 30/s each way, sampled every 10 ms:
  // nu tau = 0.3. Corrected rates must land near 30, raw well below.
  Rng rng(5, 0);
  const double nu = 30.0, dt = 0.01;
  const long n = 2000000;
  std::vector<signed char> s(static_cast<std::size_t>(n));
  std::vector<double> t(static_cast<std::size_t>(n));
  std::vector<uint32_t> flags(static_cast<std::size_t>(n), 0);
  double t_switch = rng.exponential(nu);
  signed char cur = 0;
  for (long i = 0; i < n; ++i) {
    const double now = i * dt;
    while (t_switch <= now) {
      cur = static_cast<signed char>(1 - cur);
      t_switch += rng.exponential(nu);
    }
    s[static_cast<std::size_t>(i)] = cur;
    t[static_cast<std::size_t>(i)] = now;
  }
  const RateSummary r =
      switching_rates(s.data(), t.data(), flags.data(), n, dt, 500.0);
  REQUIRE(r.up.transitions > 10000);
  CHECK(r.up.raw < 0.85 * nu);
  CHECK(r.up.corrected == doctest::Approx(nu).epsilon(0.05));
  CHECK(r.down.corrected == doctest::Approx(nu).epsilon(0.05));
}

TEST_CASE("running series covers the trace and averages to the mean rate") {
  const std::vector<signed char> s = {0, 1, 0, 1, 0, 1, 0, 1};
  std::vector<double> t(8);
  for (int i = 0; i < 8; ++i) t[i] = i;
  const std::vector<uint32_t> flags(8, 0);
  const RateSummary r =
      switching_rates(s.data(), t.data(), flags.data(), 8, 0.0, 4.0, 100.0, 1);
  REQUIRE(r.running.t_s.size() == 8);
  REQUIRE(r.running.up.size() == 8);
  // Interior windows of a strict alternation all see rate 1/s each way.
  for (long i = 2; i < 6; ++i) {
    if (std::isnan(r.running.up[i])) continue;
    CHECK(r.running.up[i] == doctest::Approx(1.0).epsilon(0.5));
  }
}
