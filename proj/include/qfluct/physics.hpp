#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace qfluct {

namespace constants {
// SI exact values (2019 redefinition).
inline constexpr double plancks = 6.62607015e-34;         // J s
inline constexpr double boltzmann = 1.380649e-23;         // J/K
inline constexpr double electron_charge = 1.602176634e-19;  // C
}  // namespace constants

// Energies are stored as frequencies (E/h, Hz) throughout.
struct TransmonSpec {
  double f0_hz = 0.0;
  double alpha_hz = 0.0;  // negative
  double ec_hz = 0.0;
  double ej_hz = 0.0;
  double xi = 0.0;        // ej / ec
  double n_g = 0.0;       // units of 2e

  // Throws ConfigError on non-positive energies; returns false when
  // outside the transmon regime (xi <= 20) so callers can warn.
  bool validate() const;
};

struct TransmonLevels {
  Eigen::ArrayXd levels_hz;  // lowest eigenvalues, ascending
  double f01_hz = 0.0;
  double f12_hz = 0.0;
  double n01 = 0.0;  // |<0|n|1>|
};

// Charge-basis diagonalization of 4E_C(n - n_g)^2 - E_J cos(phi) with
// n in [-cutoff, cutoff]. Convergence is checked against cutoff + 5;
// drift above 1 Hz in the lowest three levels raises NumericalError.
TransmonLevels diagonalize_transmon(double ec_hz, double ej_hz, double n_g, int cutoff = 40);

struct TransmonCalibration {
  double ec_hz = 0.0;
  double ej_hz = 0.0;
  double xi = 0.0;
  int iterations = 0;
};

// Inverts (f01, f12 - f01) = (f0, alpha) at n_g = 0 by a damped Newton
// iteration; residuals below 0.1 Hz.
TransmonCalibration calibrate_ec_ej(double f0_hz, double alpha_hz, int cutoff = 40);

// Large-xi asymptotic charge dispersion (Hz).
double charge_dispersion_analytic(double ec_hz, double xi);

// |f01(n_g=0) - f01(n_g=1/2)|, the cosine-extreme evaluation (Hz).
double charge_dispersion_numerical(double ec_hz, double ej_hz, int cutoff = 40);

struct ChargeOffsetSeries {
  Eigen::ArrayXd n_g;           // folded into [0, 1/4]
  std::vector<uint32_t> flags;  // clipped points marked
};

// n_g = arccos(f_delta / f_delta_max) / 2 pi; inputs outside
// [0, f_delta_max] are clipped and flagged.
ChargeOffsetSeries extract_charge_offset(Eigen::Ref<const Eigen::ArrayXd> f_delta,
                                         double f_delta_max);

struct ChargeJumpStats {
  double value = 0.0;  // mode bin center of |pre - post| jumps
  double sigma = 0.0;  // bin width
  long n_jumps = 0;
  uint32_t flags = 0;
  Eigen::ArrayXd bin_edges;
  Eigen::ArrayXi counts;
};

// Charge-offset jump magnitudes across switches: n_g just before vs just
// after each switch time, histogrammed with Freedman-Diaconis bins.
ChargeJumpStats charge_jump_statistics(Eigen::Ref<const Eigen::ArrayXd> n_g,
                                       Eigen::Ref<const Eigen::ArrayXd> t_s,
                                       const std::vector<double>& switch_times_s);

// Detailed balance: h f_TLS = k_B T |ln(nu_10 / nu_01)|. Equal rates give
// zero; the larger rate is treated as the downhill direction.
double tls_energy_from_rates(double nu_10, double nu_01, double t_k);

struct TlsParams {
  double epsilon_hz = 0.0;        // asymmetry energy / h
  double delta_hz = 0.0;          // tunnelling energy / h
  double f_tls_hz = 0.0;          // sqrt(epsilon^2 + delta^2) / h
  double d_parallel_e_angstrom = 0.0;
  double x_m = 0.0;
  double t_k = 0.0;
};

// Joint inversion of the charge-offset shift and parity-splitting
// equations under epsilon^2 + delta^2 = (h f_TLS)^2; throws
// NumericalError when the tunnelling bound cannot be met (resonant or
// inverted detuning).
TlsParams invert_tls_model(double dng, double f_delta2_hz, const TransmonSpec& spec, double n01,
                           double f_tls_hz, double x_m);

}  // namespace qfluct
