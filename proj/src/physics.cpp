#include "qfluct/physics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "qfluct/errors.hpp"

namespace qfluct {

bool TransmonSpec::validate() const {
  if (!(ec_hz > 0.0)) throw ConfigError("transmon: charging energy must be positive");
  if (!(ej_hz > 0.0)) throw ConfigError("transmon: Josephson energy must be positive");
  return xi > 20.0;
}

namespace {

struct Spectrum {
  Eigen::ArrayXd values;
  double n01 = 0.0;
};

Spectrum solve_tridiagonal(double ec_hz, double ej_hz, double n_g, int cutoff) {
  const int dim = 2 * cutoff + 1;
  Eigen::VectorXd diag(dim);
  Eigen::VectorXd sub(dim - 1);
  for (int i = 0; i < dim; ++i) {
    const double n = static_cast<double>(i - cutoff) - n_g;
    diag[i] = 4.0 * ec_hz * n * n;
  }
  sub.setConstant(-0.5 * ej_hz);
  // The QL iteration is unreliable on entries of order 1e12 Hz; normalize
  // to O(1) and scale the eigenvalues back (eigenvectors are invariant).
  const double scale = std::max(diag.cwiseAbs().maxCoeff(), 0.5 * ej_hz);
  diag /= scale;
  sub /= scale;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw NumericalError("transmon: eigensolver failed");

  Spectrum out;
  out.values = solver.eigenvalues().array() * scale;
  const auto v0 = solver.eigenvectors().col(0);
  const auto v1 = solver.eigenvectors().col(1);
  double acc = 0.0;
  for (int i = 0; i < dim; ++i) acc += static_cast<double>(i - cutoff) * v0[i] * v1[i];
  out.n01 = std::abs(acc);
  return out;
}

}  // namespace

TransmonLevels diagonalize_transmon(double ec_hz, double ej_hz, double n_g, int cutoff) {
  if (!(ec_hz > 0.0) || ej_hz < 0.0) throw ConfigError("transmon: energies must be positive");
  if (cutoff < 15) throw ConfigError("transmon: basis cutoff below the convergence guard of 15");

  const Spectrum base = solve_tridiagonal(ec_hz, ej_hz, n_g, cutoff);
  const Spectrum check = solve_tridiagonal(ec_hz, ej_hz, n_g, cutoff + 5);
  for (int k = 0; k < 3; ++k) {
    if (std::abs(base.values[k] - check.values[k]) > 1.0)
      throw NumericalError("transmon: spectrum not converged at cutoff " + std::to_string(cutoff) +
                           "; retry with at least " + std::to_string(cutoff + 10));
  }

  TransmonLevels out;
  const long keep = std::min<long>(5, base.values.size());
  out.levels_hz = base.values.head(keep);
  out.f01_hz = base.values[1] - base.values[0];
  out.f12_hz = base.values[2] - base.values[1];
  out.n01 = base.n01;
  return out;
}

TransmonCalibration calibrate_ec_ej(double f0_hz, double alpha_hz, int cutoff) {
  if (!(f0_hz > 0.0)) throw ConfigError("calibration: qubit frequency must be positive");
  if (!(alpha_hz < 0.0)) throw ConfigError("calibration: anharmonicity must be negative");

  // Asymptotics: alpha ~ -E_C and f01 ~ sqrt(8 E_J E_C) - E_C.
  double ec = -alpha_hz;
  double ej = (f0_hz + ec) * (f0_hz + ec) / (8.0 * ec);
  auto residuals = [&](double c, double j, double& r0, double& r1) {
    const Spectrum s = solve_tridiagonal(c, j, 0.0, cutoff);
    const double f01 = s.values[1] - s.values[0];
    const double f12 = s.values[2] - s.values[1];
    r0 = f01 - f0_hz;
    r1 = (f12 - f01) - alpha_hz;
  };

  TransmonCalibration out;
  for (int it = 0; it < 60; ++it) {
    double r0, r1;
    residuals(ec, ej, r0, r1);
    if (std::abs(r0) < 0.1 && std::abs(r1) < 0.1) {
      out.ec_hz = ec;
      out.ej_hz = ej;
      out.xi = ej / ec;
      out.iterations = it;
      return out;
    }
    const double hc = ec * 1e-7, hj = ej * 1e-7;
    double a0, a1, b0, b1;
    residuals(ec + hc, ej, a0, a1);
    residuals(ec, ej + hj, b0, b1);
    const double j00 = (a0 - r0) / hc, j01 = (b0 - r0) / hj;
    const double j10 = (a1 - r1) / hc, j11 = (b1 - r1) / hj;
    const double det = j00 * j11 - j01 * j10;
    if (!std::isfinite(det) || std::abs(det) < 1e-30)
      throw NumericalError("calibration: singular Jacobian");
    double dc = (r0 * j11 - r1 * j01) / det;
    double dj = (j00 * r1 - j10 * r0) / det;
    // damped step keeping both energies positive
    double scale = 1.0;
    while ((ec - scale * dc <= 0.0 || ej - scale * dj <= 0.0) && scale > 1e-6) scale *= 0.5;
    ec -= scale * dc;
    ej -= scale * dj;
  }
  throw NumericalError("calibration: no solution near E_C in (0, " + std::to_string(-2.0 * alpha_hz) +
                       ") Hz after 60 iterations");
}

double charge_dispersion_analytic(double ec_hz, double xi) {
  if (!(xi > 0.0)) throw ConfigError("dispersion: xi must be positive");
  const double half = 0.5 * xi;
  return 32.0 * std::sqrt(2.0 / M_PI) * ec_hz * std::pow(half, 0.75) * std::exp(-std::sqrt(8.0 * xi)) *
         (16.0 * std::sqrt(half) + 1.0);
}

double charge_dispersion_numerical(double ec_hz, double ej_hz, int cutoff) {
  const Spectrum even = solve_tridiagonal(ec_hz, ej_hz, 0.0, cutoff);
  const Spectrum odd = solve_tridiagonal(ec_hz, ej_hz, 0.5, cutoff);
  const double f01_even = even.values[1] - even.values[0];
  const double f01_odd = odd.values[1] - odd.values[0];
  return std::abs(f01_even - f01_odd);
}

ChargeOffsetSeries extract_charge_offset(Eigen::Ref<const Eigen::ArrayXd> f_delta,
                                         double f_delta_max) {
  if (!(f_delta_max > 0.0)) throw ConfigError("charge offset: splitting bound must be positive");
  ChargeOffsetSeries out;
  out.n_g.resize(f_delta.size());
  out.flags.assign(static_cast<size_t>(f_delta.size()), 0);
  for (long i = 0; i < f_delta.size(); ++i) {
    double ratio = f_delta[i] / f_delta_max;
    if (ratio < 0.0 || ratio > 1.0) {
      ratio = std::clamp(ratio, 0.0, 1.0);
      out.flags[static_cast<size_t>(i)] |= kFlagClipped;
    }
    out.n_g[i] = std::acos(ratio) / (2.0 * M_PI);
  }
  return out;
}

ChargeJumpStats charge_jump_statistics(Eigen::Ref<const Eigen::ArrayXd> n_g,
                                       Eigen::Ref<const Eigen::ArrayXd> t_s,
                                       const std::vector<double>& switch_times_s) {
  if (n_g.size() != t_s.size()) throw DataError("charge jumps: series lengths differ");
  std::vector<double> jumps;
  jumps.reserve(switch_times_s.size());
  for (double ts : switch_times_s) {
    const double* begin = t_s.data();
    const double* end = t_s.data() + t_s.size();
    const long k = std::lower_bound(begin, end, ts) - begin;
    if (k <= 0 || k >= t_s.size()) continue;
    jumps.push_back(std::abs(n_g[k] - n_g[k - 1]));
  }

  ChargeJumpStats out;
  out.n_jumps = static_cast<long>(jumps.size());
  if (jumps.empty()) {
    out.flags |= kFlagLowStatistics;
    return out;
  }
  if (out.n_jumps < 5) out.flags |= kFlagLowStatistics;

  std::sort(jumps.begin(), jumps.end());
  const auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(jumps.size() - 1);
    const long lo = static_cast<long>(pos);
    const long hi = std::min<long>(lo + 1, static_cast<long>(jumps.size()) - 1);
    return jumps[static_cast<size_t>(lo)] +
           (pos - static_cast<double>(lo)) * (jumps[static_cast<size_t>(hi)] - jumps[static_cast<size_t>(lo)]);
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  const double width = 2.0 * iqr / std::cbrt(static_cast<double>(jumps.size()));
  if (!(width > 0.0)) {
    out.value = quantile(0.5);
    out.sigma = 0.0;
    out.flags |= kFlagDegenerate;
    return out;
  }

  const double lo = jumps.front();
  const double span = jumps.back() - lo;
  const long nb = std::clamp<long>(static_cast<long>(std::ceil(span / width)) + 1, 1, 1000);
  const double bw = std::max(width, span / static_cast<double>(nb));
  out.bin_edges.resize(nb + 1);
  for (long b = 0; b <= nb; ++b) out.bin_edges[b] = lo + bw * static_cast<double>(b);
  out.counts = Eigen::ArrayXi::Zero(nb);
  for (double j : jumps) {
    long b = static_cast<long>((j - lo) / bw);
    b = std::clamp<long>(b, 0, nb - 1);
    out.counts[b] += 1;
  }
  long mode = 0;
  for (long b = 1; b < nb; ++b)
    if (out.counts[b] > out.counts[mode]) mode = b;
  out.value = lo + bw * (static_cast<double>(mode) + 0.5);
  out.sigma = bw;
  return out;
}

double tls_energy_from_rates(double nu_10, double nu_01, double t_k) {
  if (!(nu_10 > 0.0) || !(nu_01 > 0.0)) throw DataError("TLS energy: rates must be positive");
  if (!(t_k > 0.0)) throw ConfigError("TLS energy: temperature must be positive");
  return constants::boltzmann * t_k / constants::plancks * std::abs(std::log(nu_10 / nu_01));
}

TlsParams invert_tls_model(double dng, double f_delta2_hz, const TransmonSpec& spec, double n01,
                           double f_tls_hz, double x_m) {
  if (!(dng > 0.0)) throw DataError("TLS inversion: charge-offset jump must be positive");
  if (!(f_delta2_hz > 0.0)) throw DataError("TLS inversion: parity splitting must be positive");
  if (!(n01 > 0.0)) throw ConfigError("TLS inversion: matrix element must be positive");
  if (!(x_m > 0.0)) throw ConfigError("TLS inversion: junction thickness must be positive");
  spec.validate();

  const double detune = spec.f0_hz + spec.alpha_hz - f_tls_hz;
  if (!(detune > 0.0))
    throw NumericalError(
        "TLS inversion: tunnelling bound violated, the TLS frequency must lie below f0 + alpha");

  // p = (d/ex) eps/(h f_TLS), q = (d/ex) delta/(h f_TLS); the constraint
  // eps^2 + delta^2 = (h f_TLS)^2 makes d/ex the norm of (p, q).
  const double p = 8.0 * dng * std::sqrt(spec.ec_hz / spec.f0_hz);
  const double q = std::sqrt(2.0 * f_delta2_hz * detune / (spec.ec_hz * spec.f0_hz)) / n01;
  const double u = std::hypot(p, q);

  TlsParams out;
  out.f_tls_hz = f_tls_hz;
  out.epsilon_hz = p / u * f_tls_hz;
  out.delta_hz = q / u * f_tls_hz;
  out.d_parallel_e_angstrom = u * x_m / 1e-10;
  out.x_m = x_m;
  return out;
}

}  // namespace qfluct
