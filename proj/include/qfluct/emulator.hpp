#pragma once

#include <cstdint>

#include "qfluct/records.hpp"
#include "qfluct/schedule.hpp"

namespace qfluct {

struct EmulatedExperiment {
  Dataset data;
  GroundTruth truth;
};

// Draws one Bernoulli outcome per circuit from the closed-form outcome
// probabilities of the schedule's per-repetition parameters. Each
// (repetition, circuit) pair owns a counter-derived stream, so outcomes
// are reproducible bit for bit and independent of evaluation order.
EmulatedExperiment emulate_experiment(const ExperimentPlan& plan, const NoiseSchedule& schedule,
                                      uint64_t seed, int workers = 1);

}  // namespace qfluct
