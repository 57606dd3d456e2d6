#include "qfluct/emulator.hpp"

#include "qfluct/noise_model.hpp"
#include "qfluct/parallel.hpp"
#include "qfluct/rng.hpp"

namespace qfluct {

EmulatedExperiment emulate_experiment(const ExperimentPlan& plan, const NoiseSchedule& schedule,
                                      uint64_t seed, int workers) {
  plan.validate();
  EmulatedExperiment out;
  out.data.plan = plan;
  out.data.t_s = reconstruct_timestamps(plan);
  out.truth = realize_schedule(schedule, out.data.t_s, seed);

  const long reps = plan.total_repetitions();
  const int n_tau = static_cast<int>(plan.tau_s.size());
  const int circuits = plan.circuits_per_repetition();
  out.data.outcomes.assign(static_cast<std::size_t>(reps) * static_cast<std::size_t>(circuits), 0);
  const Eigen::ArrayXd tau =
      Eigen::Map<const Eigen::ArrayXd>(plan.tau_s.data(), static_cast<long>(plan.tau_s.size()));
  const uint64_t outcome_key = mix64(seed, 0xB17);

  parallel_for(static_cast<std::size_t>(reps), workers, [&](std::size_t r) {
    Eigen::ArrayX3d p;
    outcome_probabilities(out.truth.delta_f_hz[r], out.truth.gamma1[r], out.truth.gamma_phi[r],
                          tau, p);
    uint8_t* row = out.data.outcomes.data() + r * static_cast<std::size_t>(circuits);
    for (int i = 0; i < n_tau; ++i) {
      for (int b = 0; b < 3; ++b) {
        const int c = i * 3 + b;
        const auto block =
            Philox{outcome_key, mix64(static_cast<uint64_t>(r), static_cast<uint64_t>(c))}.block(0);
        const uint64_t bits = (static_cast<uint64_t>(block[1]) << 32) | block[0];
        const double u = static_cast<double>(bits >> 11) * 0x1.0p-53;
        row[c] = u < p(i, b) ? 1 : 0;
      }
    }
  });
  return out;
}

}  // namespace qfluct
