#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "qfluct/plan.hpp"

namespace qfluct {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Probability of drawing outcome 1 from one circuit with idle time tau
// and measurement basis b, for a qubit prepared on the equator and
// subject to detuning delta_f (Hz), relaxation gamma1 and pure dephasing
// gamma_phi (both plain rates in 1/s, no 2*pi).
template <typename S>
S outcome_probability(S delta_f_hz, S gamma1, S gamma_phi, S tau_s, Basis b) {
  using std::cos;
  using std::exp;
  using std::sin;
  const S coherence = exp(-(gamma1 / S(2) + gamma_phi) * tau_s);
  const S phase = S(kTwoPi) * delta_f_hz * tau_s;
  switch (b) {
    case Basis::X: return (S(1) - coherence * sin(phase)) / S(2);
    case Basis::Y: return (S(1) - coherence * cos(phase)) / S(2);
    case Basis::Z: return S(1) - exp(-gamma1 * tau_s) / S(2);
  }
  return S(0);
}

// Vectorized evaluation over a tau grid, one output column per basis
// (X, Y, Z). Shares the coherence factor between X and Y.
inline void outcome_probabilities(double delta_f_hz, double gamma1, double gamma_phi,
                                  const Eigen::ArrayXd& tau_s, Eigen::ArrayX3d& out) {
  out.resize(tau_s.size(), 3);
  const Eigen::ArrayXd coherence = (-(gamma1 / 2.0 + gamma_phi) * tau_s).exp();
  const Eigen::ArrayXd phase = (kTwoPi * delta_f_hz) * tau_s;
  out.col(0) = (1.0 - coherence * phase.sin()) / 2.0;
  out.col(1) = (1.0 - coherence * phase.cos()) / 2.0;
  out.col(2) = 1.0 - (-gamma1 * tau_s).exp() / 2.0;
}

}  // namespace qfluct
