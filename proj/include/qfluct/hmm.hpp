#pragma once

#include <Eigen/Dense>
#include <vector>

namespace qfluct {

// Two-state Gaussian hidden Markov model. State 1 always carries the
// larger mean after canonicalization.
struct Hmm2 {
  Eigen::Vector2d mu{0.0, 0.0};
  Eigen::Vector2d sigma{1.0, 1.0};
  Eigen::Matrix2d trans{{0.9, 0.1}, {0.1, 0.9}};  // rows: from-state, rows sum to 1
  Eigen::Vector2d start{0.5, 0.5};
};

struct Hmm2Options {
  double sigma_floor = 10.0;  // Hz; emission widths never collapse below this
  double tol = 1e-6;          // relative log-likelihood change
  int max_iter = 200;
};

struct Hmm2Fit {
  Hmm2 model;
  double mean_log10_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;  // emissions indistinguishable (e.g. constant input)
};

// Moment-based starting point: means at the 25th/75th percentiles,
// widths at half the interquartile range (floored), sticky transitions.
Hmm2 initial_model(Eigen::Ref<const Eigen::ArrayXd> x, double sigma_floor);

// Baum-Welch on a single observation sequence, scaled forward-backward.
// Fitted transition probabilities stay strictly inside (0, 1) so that no
// state can become absorbing from finite data.
Hmm2Fit fit_hmm2(Eigen::Ref<const Eigen::ArrayXd> x, const Hmm2& init, const Hmm2Options& options);
Hmm2Fit fit_hmm2(Eigen::Ref<const Eigen::ArrayXd> x, const Hmm2Options& options);

// Mean per-point base-10 log of the sequence likelihood under a fixed
// model (forward pass only).
double mean_log10_likelihood(const Hmm2& model, Eigen::Ref<const Eigen::ArrayXd> x);

// Most likely state path, values in {0, 1}.
std::vector<signed char> viterbi2(const Hmm2& model, Eigen::Ref<const Eigen::ArrayXd> x);

// Incremental forward recursion: extends the sequence likelihood one
// observation at a time under a fixed model in O(1) per step.
class ForwardScan {
 public:
  explicit ForwardScan(const Hmm2& model) : model_(model) {}
  void reset(const Hmm2& model);
  void append(double x);
  double log10_likelihood() const { return log10_sum_; }
  long length() const { return length_; }

 private:
  Hmm2 model_;
  Eigen::Vector2d alpha_{0.0, 0.0};
  double log10_sum_ = 0.0;
  long length_ = 0;
};

}  // namespace qfluct
