#pragma once

#include <cstdint>
#include <vector>

namespace qfluct {

// One two-state telegraph process contributing +-amplitude/2 to the
// detuning. Switching is either a per-repetition flip probability or a
// pair of continuous-time rates sampled at the repetition timestamps;
// exactly one mode may be set.
struct RtnSpec {
  double amplitude_hz = 0.0;
  double switch_probability = 0.0;  // per repetition step, used when > 0
  double rate_low_high = 0.0;       // 1/s, low(0) -> high(1)
  double rate_high_low = 0.0;       // 1/s, high(1) -> low(0)
  int initial_state = 0;            // 0 = low (-amplitude/2), 1 = high
};

// Deterministic injected detuning excursion covering repetitions
// [start_rep, start_rep + duration_reps).
struct PulseSpec {
  long start_rep = 0;
  long duration_reps = 0;
  double delta_f_hz = 0.0;
};

// Piecewise-constant truth: parameters change only between repetitions.
struct NoiseSchedule {
  double center_hz = 0.0;
  double gamma1 = 0.0;      // 1/s
  double gamma_phi = 0.0;   // 1/s
  std::vector<RtnSpec> rtn;
  std::vector<PulseSpec> pulses;
  void validate() const;  // throws ConfigError
};

struct GroundTruth {
  std::vector<double> delta_f_hz;
  std::vector<double> gamma1;
  std::vector<double> gamma_phi;
  // rtn_states[k][r] in {0,1}: state of telegraph level k at repetition r
  std::vector<std::vector<signed char>> rtn_states;
};

// Realizes the schedule over the given repetition timestamps. Telegraph
// level k draws from its own stream of `seed`, so adding or removing
// levels never perturbs the others.
GroundTruth realize_schedule(const NoiseSchedule& schedule, const std::vector<double>& t_s,
                             uint64_t seed);

}  // namespace qfluct
