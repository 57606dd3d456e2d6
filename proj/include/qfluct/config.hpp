#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "qfluct/hdfa.hpp"
#include "qfluct/noisefit.hpp"
#include "qfluct/plan.hpp"
#include "qfluct/schedule.hpp"

namespace qfluct {

// Repetition-index smoothing of outcome streams. `w_g` holds one window
// per qubit stream; the last entry is reused when a parallel file has
// more streams than entries.
struct AveragingConfig {
  std::vector<double> w_g = {2.0};
  bool gaussian = true;  // false selects the fixed rectangular window
  long w_fixed = 4;      // half-width in repetitions, fixed window only
};

struct PsdConfig {
  std::string parameter = "delta_f";  // delta_f | gamma1 | gamma_phi
  long segment_length = 4096;
  double overlap = 0.5;
  bool fit_model = true;
};

// Calibration inputs and the parameter ranges swept by the two-level
// system inversion. Zero `f_delta_max_hz` derives the ceiling from the
// calibrated numerical charge dispersion.
struct PhysicsConfig {
  double f0_hz = 5.030e9;
  double alpha_hz = -0.336e9;
  double f_delta_max_hz = 0.0;
  double f_delta2_hz = 0.0;  // 0 takes the level-2 splitting from the hierarchy
  double t_lo_k = 0.010;
  double t_hi_k = 0.100;
  double x_lo_m = 1.0e-9;
  double x_hi_m = 2.0e-9;
  int cutoff = 40;
};

struct PipelineConfig {
  std::vector<std::string> stages;  // canonical-order subset; empty runs nothing
  std::string output_dir = "out";
  std::string records_path;  // external input for ingest; empty uses emulate output
  std::string cache_dir;     // scratch space; empty falls back to env then output_dir
  uint64_t seed = 1;
  int workers = 1;

  ExperimentPlan plan;
  NoiseSchedule schedule;
  AveragingConfig averaging;
  NoiseFitOptions fit;
  HierarchyOptions hierarchy;
  PsdConfig psd;
  PhysicsConfig physics;

  void validate() const;  // throws ConfigError
};

// The full dependency-ordered stage chain.
const std::vector<std::string>& stage_chain();

// Defaults that run end to end: a telegraph schedule over one script of
// 20000 repetitions, qubit-0-like calibration inputs.
PipelineConfig default_config();

nlohmann::json config_to_json(const PipelineConfig& config);
// Missing keys keep defaults; unknown keys are rejected so typos fail
// loudly instead of silently reverting to defaults.
PipelineConfig config_from_json(const nlohmann::json& j);

// Hex digest of the canonical serialized form.
std::string config_digest(const PipelineConfig& config);

}  // namespace qfluct
