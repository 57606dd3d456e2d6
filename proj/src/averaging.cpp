#include "qfluct/averaging.hpp"

#include <cmath>

#include "qfluct/errors.hpp"

namespace qfluct {

Eigen::ArrayXd gaussian_kernel(double w) {
  if (!(w > 0.0)) throw ConfigError("gaussian window must be > 0");
  const long k_max = static_cast<long>(std::ceil(4.0 * w));
  Eigen::ArrayXd kernel(2 * k_max + 1);
  for (long k = -k_max; k <= k_max; ++k)
    kernel[k + k_max] = std::exp(-static_cast<double>(k * k) / (2.0 * w * w));
  return kernel;
}

namespace {

// Transposes outcomes into per-circuit contiguous series.
Eigen::ArrayXXd outcome_matrix(const Dataset& data) {
  const long reps = data.n_reps();
  const int circuits = data.n_circuits();
  Eigen::ArrayXXd bits(reps, circuits);  // column per circuit
  for (long r = 0; r < reps; ++r) {
    const uint8_t* row = data.outcomes.data() + static_cast<std::size_t>(r) * circuits;
    for (int c = 0; c < circuits; ++c) bits(r, c) = static_cast<double>(row[c]);
  }
  return bits;
}

ProbabilitySeries make_series(const Dataset& data, double window, bool gaussian) {
  ProbabilitySeries s;
  s.t_s = data.t_s;
  s.tau_s = Eigen::Map<const Eigen::ArrayXd>(data.plan.tau_s.data(),
                                             static_cast<long>(data.plan.tau_s.size()));
  s.window = window;
  s.gaussian = gaussian;
  const long n_tau = s.tau_s.size();
  for (auto& m : s.p) m.resize(n_tau, data.n_reps());
  s.n_eff.resize(data.n_reps());
  s.flags.assign(static_cast<std::size_t>(data.n_reps()), 0);
  return s;
}

}  // namespace

ProbabilitySeries gaussian_average(const Dataset& data, double w) {
  data.validate();
  const Eigen::ArrayXd kernel = gaussian_kernel(w);
  const long k_max = (kernel.size() - 1) / 2;
  const long reps = data.n_reps();
  const int circuits = data.n_circuits();
  const long n_tau = static_cast<long>(data.plan.tau_s.size());
  const Eigen::ArrayXXd bits = outcome_matrix(data);
  ProbabilitySeries s = make_series(data, w, true);

  for (long r = 0; r < reps; ++r) {
    const long lo = r - k_max < 0 ? 0 : r - k_max;
    const long hi = r + k_max >= reps ? reps - 1 : r + k_max;
    const long len = hi - lo + 1;
    const auto k_slice = kernel.segment(lo - (r - k_max), len);
    const double norm = k_slice.sum();
    s.n_eff[r] = norm;
    if (len < kernel.size()) s.flags[static_cast<std::size_t>(r)] |= kFlagEdgeWindow;
    for (int c = 0; c < circuits; ++c) {
      const double acc = (bits.col(c).segment(lo, len) * k_slice).sum();
      s.p[static_cast<std::size_t>(c % 3)](c / 3, r) = acc / norm;
    }
  }
  (void)n_tau;
  return s;
}

ProbabilitySeries fixed_average(const Dataset& data, long w) {
  data.validate();
  if (w < 0) throw ConfigError("fixed window must be >= 0");
  const long reps = data.n_reps();
  const int circuits = data.n_circuits();
  const Eigen::ArrayXXd bits = outcome_matrix(data);
  ProbabilitySeries s = make_series(data, static_cast<double>(w), false);

  // Prefix sums give O(1) window sums per point.
  Eigen::ArrayXXd prefix(reps + 1, circuits);
  prefix.row(0).setZero();
  for (long r = 0; r < reps; ++r) prefix.row(r + 1) = prefix.row(r) + bits.row(r);

  for (long r = 0; r < reps; ++r) {
    long w_eff = w;
    if (r < w_eff) w_eff = r;
    if (reps - 1 - r < w_eff) w_eff = reps - 1 - r;
    const long lo = r - w_eff, hi = r + w_eff;
    const double count = static_cast<double>(2 * w_eff + 1);
    s.n_eff[r] = count;
    if (w_eff < w) s.flags[static_cast<std::size_t>(r)] |= kFlagEdgeWindow;
    for (int c = 0; c < circuits; ++c) {
      const double acc = prefix(hi + 1, c) - prefix(lo, c);
      s.p[static_cast<std::size_t>(c % 3)](c / 3, r) = acc / count;
    }
  }
  return s;
}

SliceObservation slice_at(const ProbabilitySeries& series, long rep) {
  if (rep < 0 || rep >= series.n_reps()) throw DataError("slice index out of range");
  SliceObservation s;
  s.tau_s = series.tau_s;
  const long n_tau = series.n_tau();
  s.p.resize(n_tau, 3);
  s.n_eff.resize(n_tau, 3);
  for (int b = 0; b < 3; ++b) {
    s.p.col(b) = series.p[static_cast<std::size_t>(b)].col(rep);
    s.n_eff.col(b).setConstant(series.n_eff[rep]);
  }
  return s;
}

}  // namespace qfluct
