#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "qfluct/plan.hpp"
#include "qfluct/schedule.hpp"

namespace qfluct {

// Full binary measurement stream. Outcomes are stored packed, one byte
// per circuit draw, row-major over (repetition, circuit); the circuit
// index is tau_index * 3 + basis.
struct Dataset {
  ExperimentPlan plan;
  std::vector<double> t_s;         // per repetition
  std::vector<uint8_t> outcomes;   // total_repetitions * circuits_per_repetition

  long n_reps() const { return static_cast<long>(t_s.size()); }
  int n_circuits() const { return plan.circuits_per_repetition(); }
  uint8_t outcome(long rep, int circuit) const {
    return outcomes[static_cast<std::size_t>(rep) * static_cast<std::size_t>(n_circuits()) +
                    static_cast<std::size_t>(circuit)];
  }
  void validate() const;  // throws DataError
};

// Record stream I/O: one row per circuit draw with columns
// (script, repetition, tau_index, tau_s, basis, outcome, t_s) plus a
// sidecar metadata document carrying the plan.
void write_records(const std::filesystem::path& path, const Dataset& data);
Dataset read_records(const std::filesystem::path& path);

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& truth,
                        const std::vector<double>& t_s);
GroundTruth read_ground_truth(const std::filesystem::path& path);

}  // namespace qfluct
