#pragma once

#include <string>
#include <vector>

namespace qfluct {

enum class Basis : int { X = 0, Y = 1, Z = 2 };

char basis_letter(Basis b);
Basis parse_basis(const std::string& s);

// Layout of one acquisition: n_scripts scripts, each holding
// reps_per_script repetitions of the full sequence {tau_i x basis}.
// Within one repetition the circuits run in the fixed order
// (tau_1 X, tau_1 Y, tau_1 Z, tau_2 X, ...).
struct ExperimentPlan {
  std::vector<double> tau_s;      // idle-time grid, seconds, non-decreasing
  int n_scripts = 1;
  long reps_per_script = 20000;
  double t_other_s = 12.3e-6;     // per-circuit overhead: gates + readout + reset
  // Optional wall-clock metadata, one entry per script. When absent,
  // timestamps fall back to uniform spacing with a warning.
  std::vector<double> script_start_s;
  std::vector<double> script_duration_s;

  int circuits_per_repetition() const { return static_cast<int>(tau_s.size()) * 3; }
  long total_repetitions() const { return static_cast<long>(n_scripts) * reps_per_script; }
  // Nominal duration of one repetition: three bases over the full tau grid.
  double repetition_duration_s() const;
  void validate() const;  // throws ConfigError
};

// Uniform grid of n points covering [tau_min, tau_max].
std::vector<double> uniform_tau_grid(int n, double tau_min_s, double tau_max_s);

// Repetition start times relative to the first script's start:
// t_r = (T_j - T_0) + (r - j*N_s - 1) * D_j / N_s with r 1-based global,
// j = (r-1) / N_s. Falls back to r-1 times the nominal repetition
// duration when per-script metadata is missing.
std::vector<double> reconstruct_timestamps(const ExperimentPlan& plan,
                                           std::vector<std::string>* warnings = nullptr);

}  // namespace qfluct
