#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace qfluct {

struct RateEstimate {
  double raw = 0.0;            // transitions per second of dwell time
  double raw_ci_lo = 0.0, raw_ci_hi = 0.0;
  double corrected = 0.0;
  double corrected_ci_lo = 0.0, corrected_ci_hi = 0.0;
  long transitions = 0;
  double dwell_s = 0.0;
  bool correctable = true;     // false when raw * tau_min * e > 1
};

// Inverts raw = nu * exp(-tau_min * nu) on the branch nu * tau_min < 1,
// compensating for switches shorter than tau_min going undetected.
// Throws NumericalError when raw * tau_min * e > 1 (no real solution).
double correct_censored_rate(double raw, double tau_min_s);

struct RateSeries {
  Eigen::ArrayXd t_s;
  Eigen::ArrayXd up;      // low -> high, 1/s (NaN where the window is empty)
  Eigen::ArrayXd down;    // high -> low
  std::vector<uint32_t> flags;
};

struct RateSummary {
  RateEstimate up;    // low(0) -> high(1)
  RateEstimate down;  // high(1) -> low(0)
  double tau_min_s = 0.0;
  RateSeries running;
};

// Transition statistics of a two-state path sampled at timestamps t.
// Pairs spanning masked points or gaps wider than gap_factor times the
// median step contribute neither transitions nor dwell time. Running
// averages use a centered window of width window_s evaluated every
// `stride` samples (0 picks a stride that yields ~2048 samples).
RateSummary switching_rates(const signed char* state, const double* t_s, const uint32_t* flags,
                            long n, double tau_min_s, double window_s, double gap_factor = 100.0,
                            long stride = 0);

}  // namespace qfluct
