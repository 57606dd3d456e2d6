#include "qfluct/plan.hpp"

#include "qfluct/errors.hpp"

namespace qfluct {

char basis_letter(Basis b) {
  switch (b) {
    case Basis::X: return 'X';
    case Basis::Y: return 'Y';
    case Basis::Z: return 'Z';
  }
  throw ConfigError("invalid basis value");
}

Basis parse_basis(const std::string& s) {
  if (s == "X" || s == "x") return Basis::X;
  if (s == "Y" || s == "y") return Basis::Y;
  if (s == "Z" || s == "z") return Basis::Z;
  throw DataError("unknown basis '" + s + "'");
}

double ExperimentPlan::repetition_duration_s() const {
  double total = 0.0;
  for (double tau : tau_s) total += tau + t_other_s;
  return 3.0 * total;
}

void ExperimentPlan::validate() const {
  if (tau_s.empty()) throw ConfigError("tau grid is empty");
  for (std::size_t i = 0; i < tau_s.size(); ++i) {
    if (tau_s[i] < 0.0) throw ConfigError("tau grid has a negative entry");
    if (i > 0 && tau_s[i] < tau_s[i - 1]) throw ConfigError("tau grid is not non-decreasing");
  }
  if (n_scripts < 1) throw ConfigError("n_scripts must be >= 1");
  if (reps_per_script < 1) throw ConfigError("reps_per_script must be >= 1");
  if (t_other_s < 0.0) throw ConfigError("t_other_s must be >= 0");
  if (!script_start_s.empty() &&
      script_start_s.size() != static_cast<std::size_t>(n_scripts))
    throw ConfigError("script_start_s must have one entry per script");
  if (!script_duration_s.empty() &&
      script_duration_s.size() != static_cast<std::size_t>(n_scripts))
    throw ConfigError("script_duration_s must have one entry per script");
  for (double d : script_duration_s)
    if (d <= 0.0) throw ConfigError("script durations must be positive");
  for (std::size_t j = 1; j < script_start_s.size(); ++j)
    if (script_start_s[j] < script_start_s[j - 1])
      throw ConfigError("script start times must be non-decreasing");
}

std::vector<double> uniform_tau_grid(int n, double tau_min_s, double tau_max_s) {
  if (n < 1) throw ConfigError("tau grid needs at least one point");
  if (tau_max_s < tau_min_s) throw ConfigError("tau_max_s < tau_min_s");
  std::vector<double> grid(n);
  for (int i = 0; i < n; ++i)
    grid[i] = n == 1 ? tau_min_s
                     : tau_min_s + (tau_max_s - tau_min_s) * static_cast<double>(i) /
                           static_cast<double>(n - 1);
  return grid;
}

std::vector<double> reconstruct_timestamps(const ExperimentPlan& plan,
                                           std::vector<std::string>* warnings) {
  plan.validate();
  const long n = plan.total_repetitions();
  std::vector<double> t(static_cast<std::size_t>(n));
  const bool have_meta = !plan.script_start_s.empty() && !plan.script_duration_s.empty();
  if (!have_meta) {
    if (warnings)
      warnings->push_back(
          "script timing metadata missing; timestamps assume uniform repetition spacing");
    const double dt = plan.repetition_duration_s();
    for (long r = 0; r < n; ++r) t[static_cast<std::size_t>(r)] = static_cast<double>(r) * dt;
    return t;
  }
  const double t0 = plan.script_start_s.front();
  for (long r1 = 1; r1 <= n; ++r1) {  // r1 is the 1-based global repetition index
    const long j = (r1 - 1) / plan.reps_per_script;
    const double within = static_cast<double>(r1 - j * plan.reps_per_script - 1);
    t[static_cast<std::size_t>(r1 - 1)] =
        (plan.script_start_s[static_cast<std::size_t>(j)] - t0) +
        within * plan.script_duration_s[static_cast<std::size_t>(j)] /
            static_cast<double>(plan.reps_per_script);
  }
  return t;
}

}  // namespace qfluct
