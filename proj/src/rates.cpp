#include "qfluct/rates.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "qfluct/errors.hpp"

namespace qfluct {

double correct_censored_rate(double raw, double tau_min_s) {
  if (raw < 0.0 || !std::isfinite(raw)) throw NumericalError("censored-rate correction: raw rate must be finite and non-negative");
  if (tau_min_s < 0.0) throw NumericalError("censored-rate correction: tau_min must be non-negative");
  if (raw == 0.0 || tau_min_s == 0.0) return raw;
  // raw = nu exp(-tau nu) peaks at nu = 1/tau with value 1/(tau e).
  if (raw * tau_min_s * std::exp(1.0) > 1.0 + 1e-12)
    throw NumericalError("censored-rate correction: observed rate exceeds the invertible branch");
  double lo = raw;                 // g(lo) <= 0
  double hi = 1.0 / tau_min_s;     // g(hi) >= 0 on the valid domain
  for (int it = 0; it < 200 && (hi - lo) > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double g = mid * std::exp(-tau_min_s * mid) - raw;
    if (g < 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

struct PairScan {
  // Per valid pair, time-ordered.
  std::vector<double> t_left, t_right;
  // Prefix sums over pairs: [k] = totals of pairs 0..k-1.
  std::vector<double> dwell_low, dwell_high;
  std::vector<long> n_up, n_down;
};

double median_step(const double* t, long n) {
  if (n < 2) return 0.0;
  std::vector<double> d(static_cast<size_t>(n - 1));
  for (long i = 0; i + 1 < n; ++i) d[static_cast<size_t>(i)] = t[i + 1] - t[i];
  const size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<long>(mid), d.end());
  double m = d[mid];
  if (d.size() % 2 == 0) {
    std::nth_element(d.begin(), d.begin() + static_cast<long>(mid) - 1, d.begin() + static_cast<long>(mid));
    m = 0.5 * (m + d[mid - 1]);
  }
  return m;
}

PairScan scan_pairs(const signed char* s, const double* t, const uint32_t* flags, long n, double max_step) {
  PairScan ps;
  ps.dwell_low.push_back(0.0);
  ps.dwell_high.push_back(0.0);
  ps.n_up.push_back(0);
  ps.n_down.push_back(0);
  for (long i = 0; i + 1 < n; ++i) {
    if (flags && ((flags[i] | flags[i + 1]) & kFlagMasked)) continue;
    const double dt = t[i + 1] - t[i];
    if (dt <= 0.0 || (max_step > 0.0 && dt > max_step)) continue;
    ps.t_left.push_back(t[i]);
    ps.t_right.push_back(t[i + 1]);
    ps.dwell_low.push_back(ps.dwell_low.back() + (s[i] == 0 ? dt : 0.0));
    ps.dwell_high.push_back(ps.dwell_high.back() + (s[i] != 0 ? dt : 0.0));
    ps.n_up.push_back(ps.n_up.back() + (s[i] == 0 && s[i + 1] != 0 ? 1 : 0));
    ps.n_down.push_back(ps.n_down.back() + (s[i] != 0 && s[i + 1] == 0 ? 1 : 0));
  }
  return ps;
}

RateEstimate make_estimate(long transitions, double dwell_s, double tau_min_s) {
  RateEstimate e;
  e.transitions = transitions;
  e.dwell_s = dwell_s;
  if (dwell_s <= 0.0) return e;
  e.raw = static_cast<double>(transitions) / dwell_s;
  if (transitions > 0) {
    const double rel = 1.96 / std::sqrt(static_cast<double>(transitions));
    e.raw_ci_lo = e.raw * std::max(0.0, 1.0 - rel);
    e.raw_ci_hi = e.raw * (1.0 + rel);
  }
  const double branch_max = tau_min_s > 0.0 ? 1.0 / (tau_min_s * std::exp(1.0)) : 0.0;
  if (tau_min_s > 0.0 && e.raw > branch_max) {
    e.correctable = false;
    e.corrected = e.raw;
    e.corrected_ci_lo = e.raw_ci_lo;
    e.corrected_ci_hi = e.raw_ci_hi;
    return e;
  }
  e.corrected = correct_censored_rate(e.raw, tau_min_s);
  e.corrected_ci_lo = correct_censored_rate(std::min(e.raw_ci_lo, branch_max > 0.0 ? branch_max : e.raw_ci_lo), tau_min_s);
  // The upper CI endpoint can leave the invertible branch even when the
  // point estimate does not; saturate it at the branch limit 1/tau.
  if (tau_min_s > 0.0 && e.raw_ci_hi > branch_max)
    e.corrected_ci_hi = 1.0 / tau_min_s;
  else
    e.corrected_ci_hi = correct_censored_rate(e.raw_ci_hi, tau_min_s);
  return e;
}

}  // namespace

RateSummary switching_rates(const signed char* state, const double* t_s, const uint32_t* flags,
                            long n, double tau_min_s, double window_s, double gap_factor,
                            long stride) {
  RateSummary out;
  out.tau_min_s = tau_min_s;
  if (n < 2) return out;
  const double med = median_step(t_s, n);
  const double max_step = gap_factor > 0.0 ? gap_factor * med : 0.0;
  const PairScan ps = scan_pairs(state, t_s, flags, n, max_step);
  const long np = static_cast<long>(ps.t_left.size());
  out.up = make_estimate(ps.n_up.back(), ps.dwell_low.back(), tau_min_s);
  out.down = make_estimate(ps.n_down.back(), ps.dwell_high.back(), tau_min_s);

  if (window_s <= 0.0 || np == 0) return out;
  if (stride <= 0) stride = std::max<long>(1, n / 2048);
  std::vector<double> rt, rup, rdown;
  std::vector<uint32_t> rflags;
  for (long i = 0; i < n; i += stride) {
    const double a = t_s[i] - 0.5 * window_s;
    const double b = t_s[i] + 0.5 * window_s;
    // Pairs fully inside [a, b]; both edges are monotone in the pair index.
    const long lo = static_cast<long>(std::lower_bound(ps.t_left.begin(), ps.t_left.end(), a) - ps.t_left.begin());
    const long hi = static_cast<long>(std::upper_bound(ps.t_right.begin(), ps.t_right.end(), b) - ps.t_right.begin());
    rt.push_back(t_s[i]);
    uint32_t f = flags ? (flags[i] & kFlagMasked) : 0u;
    if (hi <= lo) {
      rup.push_back(std::numeric_limits<double>::quiet_NaN());
      rdown.push_back(std::numeric_limits<double>::quiet_NaN());
      rflags.push_back(f | kFlagLowStatistics);
      continue;
    }
    const double dl = ps.dwell_low[hi] - ps.dwell_low[lo];
    const double dh = ps.dwell_high[hi] - ps.dwell_high[lo];
    const long nu = ps.n_up[hi] - ps.n_up[lo];
    const long nd = ps.n_down[hi] - ps.n_down[lo];
    rup.push_back(dl > 0.0 ? static_cast<double>(nu) / dl : std::numeric_limits<double>::quiet_NaN());
    rdown.push_back(dh > 0.0 ? static_cast<double>(nd) / dh : std::numeric_limits<double>::quiet_NaN());
    if (nu + nd < 10) f |= kFlagLowStatistics;
    rflags.push_back(f);
  }
  out.running.t_s = Eigen::Map<const Eigen::ArrayXd>(rt.data(), static_cast<long>(rt.size()));
  out.running.up = Eigen::Map<const Eigen::ArrayXd>(rup.data(), static_cast<long>(rup.size()));
  out.running.down = Eigen::Map<const Eigen::ArrayXd>(rdown.data(), static_cast<long>(rdown.size()));
  out.running.flags = std::move(rflags);
  return out;
}

}  // namespace qfluct
