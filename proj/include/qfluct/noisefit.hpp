#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "qfluct/averaging.hpp"
#include "qfluct/optimize.hpp"

namespace qfluct {

struct NoiseFitOptions {
  DeOptions de;                      // seed/stream are managed per slice
  double delta_f_abs_max_hz = 200e3;
  double gamma_max = 1e6;            // 1/s, applies to both decay rates
  bool weight_by_neff = false;
  int n_bootstrap = 100;
  int bootstrap_population = 16;     // replicas start warm at the base fit
  double bootstrap_tol = 1e-7;
  int bootstrap_max_generations = 200;
  double low_sensitivity_threshold = 0.1;  // on the mean coherence factor
  long warm_chain_block = 1024;      // slices per warm-start chain
  uint64_t seed = 1;
  int workers = 1;
};

struct SliceFit {
  double delta_f_hz = 0.0;
  double gamma1 = 0.0;
  double gamma_phi = 0.0;
  double objective = 0.0;
  int generations = 0;
  uint32_t flags = 0;
  Eigen::ArrayX3d residuals;  // observed minus model, per (tau, basis)
};

// Least-squares fit of (delta_f, gamma1, gamma_phi) to one repetition's
// probabilities across the full (tau, basis) grid. Global population search
// followed by a deterministic simplex refinement of the best candidate.
SliceFit fit_slice(const SliceObservation& slice, const NoiseFitOptions& options,
                   const Eigen::Vector3d* warm_start, uint64_t stream);

// Parametric+residual bootstrap spread of the fitted parameters:
// per replica, p~ = Binomial(max(1, round(n_eff)), p)/N plus a residual
// drawn with replacement from the slice's own residual pool, clipped to
// [0, 1], then refit. Returns the sample standard deviations of
// (delta_f, gamma1, gamma_phi) across replicas.
Eigen::Vector3d bootstrap_sigma(const SliceObservation& slice, const SliceFit& base,
                                const NoiseFitOptions& options, uint64_t stream);

struct NoiseTrace {
  std::vector<double> t_s;
  Eigen::ArrayXd delta_f_hz, gamma1, gamma_phi;
  Eigen::ArrayXd sigma_delta_f, sigma_gamma1, sigma_gamma_phi;
  std::vector<uint32_t> flags;

  long size() const { return static_cast<long>(t_s.size()); }
};

// Fits every repetition. Slices are chained in fixed-size warm-start
// blocks so results do not depend on the worker count.
NoiseTrace fit_series(const ProbabilitySeries& series, const NoiseFitOptions& options);

// Inverse-variance weighted mean and its standard error. Points with
// sigma == 0 are exact: when present, their plain mean (SE 0) wins.
std::pair<double, double> weighted_mean(std::span<const double> values,
                                        std::span<const double> sigmas);

}  // namespace qfluct
