#include "qfluct/config.hpp"

#include <algorithm>
#include <cstdio>
#include <initializer_list>
#include <set>

#include "qfluct/errors.hpp"
#include "qfluct/serialize.hpp"
#include "qfluct/tabular.hpp"

namespace qfluct {

namespace {

// A typo'd key silently falling back to a default is the worst failure
// mode a declarative config can have, so membership is enforced.
void check_keys(const nlohmann::json& j, const std::string& what,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(what + " must be an object");
  for (const auto& item : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* k) {
          return item.key() == k;
        }) == allowed.end())
      throw ConfigError("unknown key '" + item.key() + "' in " + what);
  }
}

template <typename T>
void take(const nlohmann::json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

}  // namespace

nlohmann::json schedule_to_json(const NoiseSchedule& schedule) {
  nlohmann::json j;
  j["center_hz"] = schedule.center_hz;
  j["gamma1"] = schedule.gamma1;
  j["gamma_phi"] = schedule.gamma_phi;
  j["rtn"] = nlohmann::json::array();
  for (const RtnSpec& r : schedule.rtn) {
    nlohmann::json e;
    e["amplitude_hz"] = r.amplitude_hz;
    e["switch_probability"] = r.switch_probability;
    e["rate_low_high"] = r.rate_low_high;
    e["rate_high_low"] = r.rate_high_low;
    e["initial_state"] = r.initial_state;
    j["rtn"].push_back(e);
  }
  j["pulses"] = nlohmann::json::array();
  for (const PulseSpec& p : schedule.pulses) {
    nlohmann::json e;
    e["start_rep"] = p.start_rep;
    e["duration_reps"] = p.duration_reps;
    e["delta_f_hz"] = p.delta_f_hz;
    j["pulses"].push_back(e);
  }
  return j;
}

NoiseSchedule schedule_from_json(const nlohmann::json& j) {
  check_keys(j, "schedule", {"center_hz", "gamma1", "gamma_phi", "rtn", "pulses"});
  NoiseSchedule s;
  try {
    take(j, "center_hz", s.center_hz);
    take(j, "gamma1", s.gamma1);
    take(j, "gamma_phi", s.gamma_phi);
    if (j.contains("rtn")) {
      for (const auto& e : j.at("rtn")) {
        check_keys(e, "schedule.rtn entry",
                   {"amplitude_hz", "switch_probability", "rate_low_high", "rate_high_low",
                    "initial_state"});
        RtnSpec r;
        take(e, "amplitude_hz", r.amplitude_hz);
        take(e, "switch_probability", r.switch_probability);
        take(e, "rate_low_high", r.rate_low_high);
        take(e, "rate_high_low", r.rate_high_low);
        take(e, "initial_state", r.initial_state);
        s.rtn.push_back(r);
      }
    }
    if (j.contains("pulses")) {
      for (const auto& e : j.at("pulses")) {
        check_keys(e, "schedule.pulses entry", {"start_rep", "duration_reps", "delta_f_hz"});
        PulseSpec p;
        take(e, "start_rep", p.start_rep);
        take(e, "duration_reps", p.duration_reps);
        take(e, "delta_f_hz", p.delta_f_hz);
        s.pulses.push_back(p);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed schedule: ") + e.what());
  }
  s.validate();
  return s;
}

const std::vector<std::string>& stage_chain() {
  static const std::vector<std::string> chain = {"emulate", "ingest", "average", "fit",
                                                 "segment", "rates",  "psd",     "physics",
                                                 "report"};
  return chain;
}

PipelineConfig default_config() {
  PipelineConfig c;
  c.stages = stage_chain();
  c.plan.tau_s = uniform_tau_grid(21, 2.0e-7, 8.0e-6);
  c.plan.n_scripts = 1;
  c.plan.reps_per_script = 20000;
  c.schedule.center_hz = -13.0e3;
  c.schedule.gamma1 = 8.0e3;
  c.schedule.gamma_phi = 8.0e3;
  RtnSpec rtn;
  rtn.amplitude_hz = 30.0e3;
  rtn.switch_probability = 1.0 / 20.0;
  c.schedule.rtn = {rtn};
  return c;
}

void PipelineConfig::validate() const {
  const auto& chain = stage_chain();
  std::set<std::string> seen;
  for (const std::string& s : stages) {
    if (std::find(chain.begin(), chain.end(), s) == chain.end())
      throw ConfigError("unknown stage '" + s + "'");
    if (!seen.insert(s).second) throw ConfigError("stage '" + s + "' listed twice");
  }
  if (!stages.empty() && output_dir.empty()) throw ConfigError("output_dir is required");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (averaging.w_g.empty()) throw ConfigError("averaging.w_g needs at least one window");
  for (double w : averaging.w_g)
    if (!(w > 0)) throw ConfigError("averaging windows must be positive");
  if (averaging.w_fixed < 1) throw ConfigError("averaging.w_fixed must be >= 1");
  if (psd.parameter != "delta_f" && psd.parameter != "gamma1" && psd.parameter != "gamma_phi")
    throw ConfigError("psd.parameter must be delta_f, gamma1 or gamma_phi");
  if (psd.segment_length < 8) throw ConfigError("psd.segment_length must be >= 8");
  if (!(psd.overlap >= 0.0 && psd.overlap <= 0.9))
    throw ConfigError("psd.overlap must lie in [0, 0.9]");
  if (physics.cutoff < 15) throw ConfigError("physics.cutoff must be >= 15");
  if (!(physics.t_lo_k > 0 && physics.t_hi_k >= physics.t_lo_k))
    throw ConfigError("physics temperature range must be positive with lo <= hi");
  if (!(physics.x_lo_m > 0 && physics.x_hi_m >= physics.x_lo_m))
    throw ConfigError("physics dipole length range must be positive with lo <= hi");
}

nlohmann::json config_to_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["stages"] = c.stages;
  j["output_dir"] = c.output_dir;
  j["records_path"] = c.records_path;
  j["cache_dir"] = c.cache_dir;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["plan"] = plan_to_json(c.plan);
  j["schedule"] = schedule_to_json(c.schedule);
  nlohmann::json& a = j["averaging"];
  a["w_g"] = c.averaging.w_g;
  a["gaussian"] = c.averaging.gaussian;
  a["w_fixed"] = c.averaging.w_fixed;
  nlohmann::json& f = j["fit"];
  f["population"] = c.fit.de.population;
  f["weight"] = c.fit.de.weight;
  f["crossover"] = c.fit.de.crossover;
  f["tol"] = c.fit.de.tol;
  f["max_generations"] = c.fit.de.max_generations;
  f["delta_f_abs_max_hz"] = c.fit.delta_f_abs_max_hz;
  f["gamma_max"] = c.fit.gamma_max;
  f["weight_by_neff"] = c.fit.weight_by_neff;
  f["n_bootstrap"] = c.fit.n_bootstrap;
  f["bootstrap_population"] = c.fit.bootstrap_population;
  f["bootstrap_tol"] = c.fit.bootstrap_tol;
  f["bootstrap_max_generations"] = c.fit.bootstrap_max_generations;
  f["low_sensitivity_threshold"] = c.fit.low_sensitivity_threshold;
  f["warm_chain_block"] = c.fit.warm_chain_block;
  nlohmann::json& h = j["hierarchy"];
  h["lambda_ll"] = c.hierarchy.lambda_ll;
  h["l_min"] = c.hierarchy.l_min;
  h["sigma_floor_hz"] = c.hierarchy.hmm.sigma_floor;
  h["hmm_tol"] = c.hierarchy.hmm.tol;
  h["hmm_max_iter"] = c.hierarchy.hmm.max_iter;
  h["n_lambda"] = c.hierarchy.n_lambda;
  h["pilot_chunk"] = c.hierarchy.pilot_chunk;
  h["l_min_candidates"] = c.hierarchy.l_min_candidates;
  h["l_min_rel_tol"] = c.hierarchy.l_min_rel_tol;
  h["spread_steps"] = c.hierarchy.spread_steps;
  h["spread_half_width"] = c.hierarchy.spread_half_width;
  h["min_transitions"] = c.hierarchy.min_transitions;
  h["zero_fraction"] = c.hierarchy.zero_fraction;
  h["max_levels"] = c.hierarchy.max_levels;
  h["rate_window_s"] = c.hierarchy.rate_window_s;
  h["gap_factor"] = c.hierarchy.gap_factor;
  nlohmann::json& p = j["psd"];
  p["parameter"] = c.psd.parameter;
  p["segment_length"] = c.psd.segment_length;
  p["overlap"] = c.psd.overlap;
  p["fit_model"] = c.psd.fit_model;
  nlohmann::json& y = j["physics"];
  y["f0_hz"] = c.physics.f0_hz;
  y["alpha_hz"] = c.physics.alpha_hz;
  y["f_delta_max_hz"] = c.physics.f_delta_max_hz;
  y["f_delta2_hz"] = c.physics.f_delta2_hz;
  y["t_lo_k"] = c.physics.t_lo_k;
  y["t_hi_k"] = c.physics.t_hi_k;
  y["x_lo_m"] = c.physics.x_lo_m;
  y["x_hi_m"] = c.physics.x_hi_m;
  y["cutoff"] = c.physics.cutoff;
  return j;
}

PipelineConfig config_from_json(const nlohmann::json& j) {
  check_keys(j, "config",
             {"stages", "output_dir", "records_path", "cache_dir", "seed", "workers", "plan",
              "schedule", "averaging", "fit", "hierarchy", "psd", "physics"});
  PipelineConfig c = default_config();
  try {
    take(j, "stages", c.stages);
    take(j, "output_dir", c.output_dir);
    take(j, "records_path", c.records_path);
    take(j, "cache_dir", c.cache_dir);
    take(j, "seed", c.seed);
    take(j, "workers", c.workers);
    if (j.contains("plan")) c.plan = plan_from_json(j.at("plan"));
    if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"));
    if (j.contains("averaging")) {
      const nlohmann::json& a = j.at("averaging");
      check_keys(a, "averaging", {"w_g", "gaussian", "w_fixed"});
      take(a, "w_g", c.averaging.w_g);
      take(a, "gaussian", c.averaging.gaussian);
      take(a, "w_fixed", c.averaging.w_fixed);
    }
    if (j.contains("fit")) {
      const nlohmann::json& f = j.at("fit");
      check_keys(f, "fit",
                 {"population", "weight", "crossover", "tol", "max_generations",
                  "delta_f_abs_max_hz", "gamma_max", "weight_by_neff", "n_bootstrap",
                  "bootstrap_population", "bootstrap_tol", "bootstrap_max_generations",
                  "low_sensitivity_threshold", "warm_chain_block"});
      take(f, "population", c.fit.de.population);
      take(f, "weight", c.fit.de.weight);
      take(f, "crossover", c.fit.de.crossover);
      take(f, "tol", c.fit.de.tol);
      take(f, "max_generations", c.fit.de.max_generations);
      take(f, "delta_f_abs_max_hz", c.fit.delta_f_abs_max_hz);
      take(f, "gamma_max", c.fit.gamma_max);
      take(f, "weight_by_neff", c.fit.weight_by_neff);
      take(f, "n_bootstrap", c.fit.n_bootstrap);
      take(f, "bootstrap_population", c.fit.bootstrap_population);
      take(f, "bootstrap_tol", c.fit.bootstrap_tol);
      take(f, "bootstrap_max_generations", c.fit.bootstrap_max_generations);
      take(f, "low_sensitivity_threshold", c.fit.low_sensitivity_threshold);
      take(f, "warm_chain_block", c.fit.warm_chain_block);
    }
    if (j.contains("hierarchy")) {
      const nlohmann::json& h = j.at("hierarchy");
      check_keys(h, "hierarchy",
                 {"lambda_ll", "l_min", "sigma_floor_hz", "hmm_tol", "hmm_max_iter", "n_lambda",
                  "pilot_chunk", "l_min_candidates", "l_min_rel_tol", "spread_steps",
                  "spread_half_width", "min_transitions", "zero_fraction", "max_levels",
                  "rate_window_s", "gap_factor"});
      take(h, "lambda_ll", c.hierarchy.lambda_ll);
      take(h, "l_min", c.hierarchy.l_min);
      take(h, "sigma_floor_hz", c.hierarchy.hmm.sigma_floor);
      take(h, "hmm_tol", c.hierarchy.hmm.tol);
      take(h, "hmm_max_iter", c.hierarchy.hmm.max_iter);
      take(h, "n_lambda", c.hierarchy.n_lambda);
      take(h, "pilot_chunk", c.hierarchy.pilot_chunk);
      take(h, "l_min_candidates", c.hierarchy.l_min_candidates);
      take(h, "l_min_rel_tol", c.hierarchy.l_min_rel_tol);
      take(h, "spread_steps", c.hierarchy.spread_steps);
      take(h, "spread_half_width", c.hierarchy.spread_half_width);
      take(h, "min_transitions", c.hierarchy.min_transitions);
      take(h, "zero_fraction", c.hierarchy.zero_fraction);
      take(h, "max_levels", c.hierarchy.max_levels);
      take(h, "rate_window_s", c.hierarchy.rate_window_s);
      take(h, "gap_factor", c.hierarchy.gap_factor);
    }
    if (j.contains("psd")) {
      const nlohmann::json& p = j.at("psd");
      check_keys(p, "psd", {"parameter", "segment_length", "overlap", "fit_model"});
      take(p, "parameter", c.psd.parameter);
      take(p, "segment_length", c.psd.segment_length);
      take(p, "overlap", c.psd.overlap);
      take(p, "fit_model", c.psd.fit_model);
    }
    if (j.contains("physics")) {
      const nlohmann::json& y = j.at("physics");
      check_keys(y, "physics",
                 {"f0_hz", "alpha_hz", "f_delta_max_hz", "f_delta2_hz", "t_lo_k", "t_hi_k",
                  "x_lo_m", "x_hi_m", "cutoff"});
      take(y, "f0_hz", c.physics.f0_hz);
      take(y, "alpha_hz", c.physics.alpha_hz);
      take(y, "f_delta_max_hz", c.physics.f_delta_max_hz);
      take(y, "f_delta2_hz", c.physics.f_delta2_hz);
      take(y, "t_lo_k", c.physics.t_lo_k);
      take(y, "t_hi_k", c.physics.t_hi_k);
      take(y, "x_lo_m", c.physics.x_lo_m);
      take(y, "x_hi_m", c.physics.x_hi_m);
      take(y, "cutoff", c.physics.cutoff);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string config_digest(const PipelineConfig& config) {
  const std::string dump = config_to_json(config).dump();
  const uint64_t h = fnv1a64(dump.data(), dump.size());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace qfluct
