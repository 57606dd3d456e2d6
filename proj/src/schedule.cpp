#include "qfluct/schedule.hpp"

#include "qfluct/errors.hpp"
#include "qfluct/rng.hpp"

namespace qfluct {

void NoiseSchedule::validate() const {
  if (gamma1 < 0.0 || gamma_phi < 0.0) throw ConfigError("decay rates must be >= 0");
  for (const RtnSpec& s : rtn) {
    const bool prob_mode = s.switch_probability > 0.0;
    const bool rate_mode = s.rate_low_high > 0.0 || s.rate_high_low > 0.0;
    if (prob_mode && rate_mode)
      throw ConfigError("telegraph level sets both switch_probability and rates");
    if (!prob_mode && !rate_mode)
      throw ConfigError("telegraph level sets neither switch_probability nor rates");
    if (s.switch_probability < 0.0 || s.switch_probability > 1.0)
      throw ConfigError("switch_probability outside [0, 1]");
    if (s.rate_low_high < 0.0 || s.rate_high_low < 0.0)
      throw ConfigError("telegraph rates must be >= 0");
    if (rate_mode && (s.rate_low_high <= 0.0 || s.rate_high_low <= 0.0))
      throw ConfigError("rate mode needs both directions > 0");
    if (s.initial_state != 0 && s.initial_state != 1)
      throw ConfigError("initial_state must be 0 or 1");
  }
  for (const PulseSpec& p : pulses)
    if (p.start_rep < 0 || p.duration_reps < 0)
      throw ConfigError("pulse indices must be >= 0");
}

namespace {

std::vector<signed char> realize_rtn(const RtnSpec& spec, const std::vector<double>& t_s,
                                     Rng& rng) {
  const std::size_t n = t_s.size();
  std::vector<signed char> state(n);
  signed char s = static_cast<signed char>(spec.initial_state);
  if (spec.switch_probability > 0.0) {
    for (std::size_t r = 0; r < n; ++r) {
      if (r > 0 && rng.bernoulli(spec.switch_probability)) s = static_cast<signed char>(1 - s);
      state[r] = s;
    }
    return state;
  }
  // Continuous-time telegraph sampled at the repetition timestamps.
  double t_next = t_s.front() +
                  rng.exponential(s == 0 ? spec.rate_low_high : spec.rate_high_low);
  for (std::size_t r = 0; r < n; ++r) {
    while (t_next <= t_s[r]) {
      s = static_cast<signed char>(1 - s);
      t_next += rng.exponential(s == 0 ? spec.rate_low_high : spec.rate_high_low);
    }
    state[r] = s;
  }
  return state;
}

}  // namespace

GroundTruth realize_schedule(const NoiseSchedule& schedule, const std::vector<double>& t_s,
                             uint64_t seed) {
  schedule.validate();
  if (t_s.empty()) throw DataError("no repetition timestamps");
  const std::size_t n = t_s.size();
  GroundTruth truth;
  truth.delta_f_hz.assign(n, schedule.center_hz);
  truth.gamma1.assign(n, schedule.gamma1);
  truth.gamma_phi.assign(n, schedule.gamma_phi);
  truth.rtn_states.reserve(schedule.rtn.size());
  for (std::size_t k = 0; k < schedule.rtn.size(); ++k) {
    Rng rng(mix64(seed, 0xA11CE), k);
    auto states = realize_rtn(schedule.rtn[k], t_s, rng);
    const double half = schedule.rtn[k].amplitude_hz / 2.0;
    for (std::size_t r = 0; r < n; ++r)
      truth.delta_f_hz[r] += states[r] == 1 ? half : -half;
    truth.rtn_states.push_back(std::move(states));
  }
  for (const PulseSpec& p : schedule.pulses) {
    const long end = p.start_rep + p.duration_reps;
    for (long r = p.start_rep; r < end && r < static_cast<long>(n); ++r)
      if (r >= 0) truth.delta_f_hz[static_cast<std::size_t>(r)] += p.delta_f_hz;
  }
  return truth;
}

}  // namespace qfluct
