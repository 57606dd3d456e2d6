#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "qfluct/records.hpp"

namespace qfluct {

// Moving-average outcome probabilities, one matrix per basis with shape
// (n_tau, n_reps). n_eff is shared across circuits because every circuit
// covers the same repetition range.
struct ProbabilitySeries {
  std::vector<double> t_s;
  Eigen::ArrayXd tau_s;
  std::array<Eigen::ArrayXXd, 3> p;  // indexed by Basis
  Eigen::ArrayXd n_eff;              // per repetition
  std::vector<uint32_t> flags;       // per repetition (edge windows flagged)
  double window = 0.0;
  bool gaussian = true;

  long n_reps() const { return static_cast<long>(t_s.size()); }
  long n_tau() const { return tau_s.size(); }
};

// Gaussian kernel weights exp(-k^2 / (2 w^2)) truncated at |k| <= ceil(4w).
Eigen::ArrayXd gaussian_kernel(double w);

// Gaussian moving average over the repetition index. Windows touching a
// stream boundary renormalize over the available points and carry the
// edge flag. Requires w > 0.
ProbabilitySeries gaussian_average(const Dataset& data, double w);

// Plain mean over repetitions [r - w, r + w]; boundary windows shrink
// symmetrically. Requires w >= 0.
ProbabilitySeries fixed_average(const Dataset& data, long w);

// One repetition's probabilities for the fitting stage.
struct SliceObservation {
  Eigen::ArrayXd tau_s;
  Eigen::ArrayX3d p;
  Eigen::ArrayX3d n_eff;
};
SliceObservation slice_at(const ProbabilitySeries& series, long rep);

}  // namespace qfluct
