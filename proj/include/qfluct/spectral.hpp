#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace qfluct {

struct WelchOptions {
  long segment_length = 65536;
  double overlap = 0.5;  // fraction of segment_length
};

struct PsdEstimate {
  Eigen::ArrayXd f_hz;  // positive ascending, Nyquist included
  Eigen::ArrayXd psd;   // one-sided, units^2/Hz
  long segment_length = 0;
  double dt_s = 0.0;
  long n_segments = 0;
  std::string window = "hann";
};

// Averaged modified periodogram: Hann taper, overlapping demeaned
// segments. Throws ConfigError when the trace is shorter than one
// segment.
PsdEstimate welch_psd(Eigen::Ref<const Eigen::ArrayXd> x, double dt_s,
                      const WelchOptions& options = {});

// Nearest-neighbor resampling onto the median time step; stretches whose
// internal gaps exceed gap_factor times the median step are split and
// their periodograms pooled.
PsdEstimate welch_psd_nonuniform(Eigen::Ref<const Eigen::ArrayXd> t_s,
                                 Eigen::Ref<const Eigen::ArrayXd> x,
                                 const WelchOptions& options = {}, double gap_factor = 100.0);

struct PsdModel {
  double amplitude = 0.0;  // A of A/f^alpha, units^2/Hz at 1 Hz
  double alpha = 0.0;
  double floor = 0.0;      // white-noise level C
  double w_g = 0.0;        // kernel width the transfer function used
  bool converged = false;
};

// Squared magnitude of the normalized Gaussian kernel's frequency
// response at f (kernel sampled at dt_s, width w in samples). w <= 0 is
// the identity.
double kernel_transfer(double f_hz, double w, double dt_s);

// Log-space least squares of |H_G(f)|^2 (A/f^alpha + C) against the
// estimate, excluding the two lowest bins and everything above 0.8x
// Nyquist. Requires two decades of usable frequency coverage.
PsdModel fit_psd_model(const PsdEstimate& estimate, double w_g, uint64_t seed = 0);

}  // namespace qfluct
