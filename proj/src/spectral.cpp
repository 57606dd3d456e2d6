#include "qfluct/spectral.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "qfluct/averaging.hpp"
#include "qfluct/errors.hpp"
#include "qfluct/optimize.hpp"
#include "qfluct/rng.hpp"

namespace qfluct {

namespace {

void validate_welch(const WelchOptions& options, double dt_s) {
  if (options.segment_length < 8) throw ConfigError("welch: segment length must be at least 8");
  if (options.overlap < 0.0 || options.overlap > 0.9)
    throw ConfigError("welch: overlap must lie in [0, 0.9]");
  if (!(dt_s > 0.0)) throw ConfigError("welch: sample interval must be positive");
}

// Accumulates |X_k|^2 of Hann-tapered demeaned segments into acc.
long accumulate_segments(Eigen::Ref<const Eigen::ArrayXd> x, const WelchOptions& options,
                         Eigen::ArrayXd& acc) {
  const long seg = options.segment_length;
  const long hop = std::max<long>(1, seg - std::lround(options.overlap * static_cast<double>(seg)));
  if (x.size() < seg) return 0;

  Eigen::ArrayXd window(seg);
  for (long j = 0; j < seg; ++j)
    window[j] = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(j) / static_cast<double>(seg)));

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> buf(static_cast<size_t>(seg));
  std::vector<std::complex<double>> spectrum;
  long count = 0;
  for (long start = 0; start + seg <= x.size(); start += hop) {
    auto block = x.segment(start, seg);
    const double mean = block.mean();
    for (long j = 0; j < seg; ++j) buf[static_cast<size_t>(j)] = (block[j] - mean) * window[j];
    fft.fwd(spectrum, buf);
    for (long k = 0; k <= seg / 2; ++k) acc[k] += std::norm(spectrum[static_cast<size_t>(k)]);
    ++count;
  }
  return count;
}

PsdEstimate finalize(Eigen::ArrayXd&& acc, long n_segments, const WelchOptions& options,
                     double dt_s) {
  const long seg = options.segment_length;
  Eigen::ArrayXd window(seg);
  for (long j = 0; j < seg; ++j)
    window[j] = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(j) / static_cast<double>(seg)));
  const double norm = window.square().sum();

  PsdEstimate out;
  out.segment_length = seg;
  out.dt_s = dt_s;
  out.n_segments = n_segments;
  const long half = seg / 2;
  out.f_hz.resize(half);
  out.psd.resize(half);
  const double scale = dt_s / (norm * static_cast<double>(n_segments));
  for (long k = 1; k <= half; ++k) {
    out.f_hz[k - 1] = static_cast<double>(k) / (static_cast<double>(seg) * dt_s);
    out.psd[k - 1] = acc[k] * scale * (k == half ? 1.0 : 2.0);
  }
  return out;
}

}  // namespace

PsdEstimate welch_psd(Eigen::Ref<const Eigen::ArrayXd> x, double dt_s,
                      const WelchOptions& options) {
  validate_welch(options, dt_s);
  if (x.size() < options.segment_length)
    throw ConfigError("welch: trace shorter than one segment; choose a smaller segment length");
  Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(options.segment_length / 2 + 1);
  const long n = accumulate_segments(x, options, acc);
  return finalize(std::move(acc), n, options, dt_s);
}

PsdEstimate welch_psd_nonuniform(Eigen::Ref<const Eigen::ArrayXd> t_s,
                                 Eigen::Ref<const Eigen::ArrayXd> x,
                                 const WelchOptions& options, double gap_factor) {
  const long n = x.size();
  if (t_s.size() != n) throw DataError("welch: timestamp and value lengths differ");
  if (n < 2) throw DataError("welch: need at least 2 samples");
  for (long i = 1; i < n; ++i)
    if (!(t_s[i] > t_s[i - 1])) throw DataError("welch: timestamps must be strictly increasing");

  std::vector<double> diffs(static_cast<size_t>(n - 1));
  for (long i = 0; i + 1 < n; ++i) diffs[static_cast<size_t>(i)] = t_s[i + 1] - t_s[i];
  std::vector<double> sorted = diffs;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
  const double dt = sorted[sorted.size() / 2];
  if (!(dt > 0.0)) throw DataError("welch: degenerate time step");

  validate_welch(options, dt);
  Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(options.segment_length / 2 + 1);
  long total_segments = 0;
  long chunk_begin = 0;
  auto flush = [&](long begin, long end) {
    if (end - begin < 2) return;
    const double span = t_s[end - 1] - t_s[begin];
    // Tolerance keeps a uniform chunk at exactly its own sample count when
    // span/dt lands a few ulps under an integer.
    const long m = static_cast<long>(std::floor(span / dt + 1e-9)) + 1;
    if (m < options.segment_length) return;
    Eigen::ArrayXd u(m);
    long src = begin;
    for (long j = 0; j < m; ++j) {
      const double target = t_s[begin] + static_cast<double>(j) * dt;
      while (src + 1 < end &&
             std::abs(t_s[src + 1] - target) <= std::abs(t_s[src] - target))
        ++src;
      u[j] = x[src];
    }
    total_segments += accumulate_segments(u, options, acc);
  };
  for (long i = 1; i < n; ++i) {
    if (diffs[static_cast<size_t>(i - 1)] > gap_factor * dt) {
      flush(chunk_begin, i);
      chunk_begin = i;
    }
  }
  flush(chunk_begin, n);
  if (total_segments == 0)
    throw ConfigError("welch: no stretch spans one segment; choose a smaller segment length");
  return finalize(std::move(acc), total_segments, options, dt);
}

double kernel_transfer(double f_hz, double w, double dt_s) {
  if (w <= 0.0) return 1.0;
  const Eigen::ArrayXd kernel = gaussian_kernel(w);
  const long radius = kernel.size() / 2;
  const double total = kernel.sum();
  double h = kernel[radius] / total;
  for (long o = 1; o <= radius; ++o)
    h += 2.0 * kernel[radius + o] / total * std::cos(2.0 * M_PI * f_hz * static_cast<double>(o) * dt_s);
  return h * h;
}

PsdModel fit_psd_model(const PsdEstimate& estimate, double w_g, uint64_t seed) {
  const double f_nyq = 0.5 / estimate.dt_s;
  std::vector<double> f, p, h2;
  for (long k = 2; k < estimate.f_hz.size(); ++k) {
    if (estimate.f_hz[k] > 0.8 * f_nyq) break;
    if (!(estimate.psd[k] > 0.0)) continue;
    f.push_back(estimate.f_hz[k]);
    p.push_back(estimate.psd[k]);
    h2.push_back(kernel_transfer(estimate.f_hz[k], w_g, estimate.dt_s));
  }
  if (f.size() < 8 || f.back() / f.front() < 100.0)
    throw ConfigError("psd fit: need two decades of usable frequency coverage");

  std::vector<double> ref_sort = p;
  std::nth_element(ref_sort.begin(), ref_sort.begin() + static_cast<long>(ref_sort.size() / 2),
                   ref_sort.end());
  const double p_ref = ref_sort[ref_sort.size() / 2];

  const size_t m = f.size();
  std::vector<double> log_p(m);
  for (size_t i = 0; i < m; ++i) log_p[i] = std::log(p[i] / p_ref);

  auto objective = [&](const Eigen::VectorXd& q) {
    const double a = std::pow(10.0, q[0]);
    const double alpha = q[1];
    const double c = std::pow(10.0, q[2]);
    double ss = 0.0;
    for (size_t i = 0; i < m; ++i) {
      const double model = h2[i] * (a * std::pow(f[i], -alpha) + c);
      const double r = std::log(model) - log_p[i];
      ss += r * r;
    }
    return ss / static_cast<double>(m);
  };

  Eigen::VectorXd lower(3), upper(3);
  lower << -18.0, 0.0, -18.0;
  upper << 12.0, 3.0, 6.0;
  DeOptions de;
  de.tol = 1e-12;
  de.max_generations = 800;
  de.seed = seed;
  de.stream = mix64(0x95D, 0);
  const DeResult res = differential_evolution(objective, lower, upper, {}, de);

  PsdModel out;
  out.amplitude = std::pow(10.0, res.x[0]) * p_ref;
  out.alpha = res.x[1];
  out.floor = std::pow(10.0, res.x[2]) * p_ref;
  out.w_g = w_g;
  out.converged = res.converged;
  return out;
}

}  // namespace qfluct
