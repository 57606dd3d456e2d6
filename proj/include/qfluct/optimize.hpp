#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

namespace qfluct {

struct DeOptions {
  int population = 30;
  double weight = 0.7;     // mutation factor
  double crossover = 0.9;
  double tol = 1e-8;       // stop when the population objective spread falls below
  int max_generations = 500;
  uint64_t seed = 0;
  uint64_t stream = 0;
};

struct DeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int generations = 0;
  bool converged = false;
};

// Differential evolution (best/1/bin) over a box. Warm starts are
// injected into the initial population after clipping; the remainder is
// sampled uniformly. Fully deterministic for a fixed (seed, stream).
DeResult differential_evolution(const std::function<double(const Eigen::VectorXd&)>& objective,
                                const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                const std::vector<Eigen::VectorXd>& warm_starts,
                                const DeOptions& options);

struct NmResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Bounded Nelder-Mead refinement from a starting point; trial vertices
// are projected onto the box. Deterministic (no RNG). Used to finish a
// population search along flat valleys, where the population's value
// spread collapses before the minimum is reached.
NmResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                     const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                     const Eigen::VectorXd& x0, int max_iter = 300);

}  // namespace qfluct
