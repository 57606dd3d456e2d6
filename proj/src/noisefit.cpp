#include "qfluct/noisefit.hpp"

#include <cmath>

#include "qfluct/errors.hpp"
#include "qfluct/noise_model.hpp"
#include "qfluct/parallel.hpp"
#include "qfluct/rng.hpp"

namespace qfluct {

namespace {

struct SliceObjective {
  const SliceObservation& slice;
  Eigen::ArrayX3d weights;  // normalized to mean 1 when weighting is on
  mutable Eigen::ArrayX3d model;

  SliceObjective(const SliceObservation& s, bool weight_by_neff) : slice(s) {
    if (weight_by_neff) {
      weights = s.n_eff / s.n_eff.mean();
    } else {
      weights.resize(s.p.rows(), 3);
      weights.setOnes();
    }
  }

  double operator()(const Eigen::VectorXd& x) const {
    outcome_probabilities(x[0], x[1], x[2], slice.tau_s, model);
    return (weights * (slice.p - model).square()).sum();
  }
};

uint64_t kBaseFitKey(uint64_t seed) { return mix64(seed, 0xF17); }
uint64_t kBootstrapKey(uint64_t seed) { return mix64(seed, 0xB007); }

SliceFit finish_fit(const SliceObservation& slice, const NoiseFitOptions& options,
                    const DeResult& de) {
  SliceFit fit;
  fit.delta_f_hz = de.x[0];
  fit.gamma1 = de.x[1];
  fit.gamma_phi = de.x[2];
  fit.objective = de.value;
  fit.generations = de.generations;
  if (!de.converged) fit.flags |= kFlagNonConverged;
  Eigen::ArrayX3d model;
  outcome_probabilities(fit.delta_f_hz, fit.gamma1, fit.gamma_phi, slice.tau_s, model);
  fit.residuals = slice.p - model;
  const double coherence =
      (-(fit.gamma1 / 2.0 + fit.gamma_phi) * slice.tau_s).exp().mean();
  if (coherence < options.low_sensitivity_threshold) fit.flags |= kFlagLowSensitivity;
  return fit;
}

}  // namespace

SliceFit fit_slice(const SliceObservation& slice, const NoiseFitOptions& options,
                   const Eigen::Vector3d* warm_start, uint64_t stream) {
  if (slice.p.rows() != slice.tau_s.size() || slice.n_eff.rows() != slice.tau_s.size())
    throw DataError("slice arrays have mismatched lengths");
  const SliceObjective objective(slice, options.weight_by_neff);
  Eigen::VectorXd lower(3), upper(3);
  lower << -options.delta_f_abs_max_hz, 0.0, 0.0;
  upper << options.delta_f_abs_max_hz, options.gamma_max, options.gamma_max;
  std::vector<Eigen::VectorXd> warm;
  if (warm_start != nullptr) warm.push_back(*warm_start);
  DeOptions de = options.de;
  de.seed = kBaseFitKey(options.seed);
  de.stream = stream;
  DeResult result = differential_evolution(std::cref(objective), lower, upper, warm, de);
  // The decay pair is nearly degenerate along gamma1/2 + gamma_phi = const; the
  // population search stalls on that valley, so finish with a simplex descent.
  const NmResult polish = nelder_mead(std::cref(objective), lower, upper, result.x);
  if (polish.value <= result.value) {
    result.x = polish.x;
    result.value = polish.value;
  }
  return finish_fit(slice, options, result);
}

Eigen::Vector3d bootstrap_sigma(const SliceObservation& slice, const SliceFit& base,
                                const NoiseFitOptions& options, uint64_t stream) {
  if (options.n_bootstrap < 2) return Eigen::Vector3d::Zero();
  const long n_tau = slice.tau_s.size();
  const long pool = base.residuals.size();
  Eigen::VectorXd lower(3), upper(3);
  lower << -options.delta_f_abs_max_hz, 0.0, 0.0;
  upper << options.delta_f_abs_max_hz, options.gamma_max, options.gamma_max;
  Eigen::Vector3d base_x(base.delta_f_hz, base.gamma1, base.gamma_phi);
  const std::vector<Eigen::VectorXd> warm = {base_x};

  Eigen::MatrixX3d draws(options.n_bootstrap, 3);
  SliceObservation replica = slice;
  for (int k = 0; k < options.n_bootstrap; ++k) {
    Rng rng(kBootstrapKey(options.seed), mix64(stream, static_cast<uint64_t>(k)));
    for (long i = 0; i < n_tau; ++i) {
      for (int b = 0; b < 3; ++b) {
        const long n = std::max<long>(1, std::lround(slice.n_eff(i, b)));
        const double p = std::clamp(slice.p(i, b), 0.0, 1.0);
        double v = static_cast<double>(rng.binomial(n, p)) / static_cast<double>(n);
        v += base.residuals(static_cast<long>(rng.next_u64() % static_cast<uint64_t>(pool)));
        replica.p(i, b) = std::clamp(v, 0.0, 1.0);
      }
    }
    const SliceObjective objective(replica, options.weight_by_neff);
    DeOptions de = options.de;
    de.population = options.bootstrap_population;
    de.tol = options.bootstrap_tol;
    de.max_generations = options.bootstrap_max_generations;
    de.seed = kBootstrapKey(options.seed);
    de.stream = mix64(stream, 0x5EED0000ull + static_cast<uint64_t>(k));
    DeResult r = differential_evolution(std::cref(objective), lower, upper, warm, de);
    const NmResult polish = nelder_mead(std::cref(objective), lower, upper, r.x);
    if (polish.value <= r.value) r.x = polish.x;
    draws.row(k) = r.x.transpose();
  }
  const Eigen::RowVector3d mean = draws.colwise().mean();
  const Eigen::RowVector3d var =
      (draws.rowwise() - mean).array().square().colwise().sum() /
      static_cast<double>(options.n_bootstrap - 1);
  return var.array().sqrt().transpose();
}

NoiseTrace fit_series(const ProbabilitySeries& series, const NoiseFitOptions& options) {
  const long n = series.n_reps();
  if (n == 0) throw DataError("empty probability series");
  NoiseTrace trace;
  trace.t_s = series.t_s;
  trace.delta_f_hz.resize(n);
  trace.gamma1.resize(n);
  trace.gamma_phi.resize(n);
  trace.sigma_delta_f.resize(n);
  trace.sigma_gamma1.resize(n);
  trace.sigma_gamma_phi.resize(n);
  trace.flags.assign(static_cast<std::size_t>(n), 0);

  const long block = std::max<long>(1, options.warm_chain_block);
  const long n_blocks = (n + block - 1) / block;
  parallel_for(static_cast<std::size_t>(n_blocks), options.workers, [&](std::size_t bi) {
    const long begin = static_cast<long>(bi) * block;
    const long end = std::min(n, begin + block);
    Eigen::Vector3d warm;
    bool have_warm = false;
    for (long r = begin; r < end; ++r) {
      const SliceObservation slice = slice_at(series, r);
      const SliceFit fit = fit_slice(slice, options, have_warm ? &warm : nullptr,
                                     static_cast<uint64_t>(r));
      warm << fit.delta_f_hz, fit.gamma1, fit.gamma_phi;
      have_warm = true;
      const Eigen::Vector3d sigma =
          options.n_bootstrap >= 2
              ? bootstrap_sigma(slice, fit, options, static_cast<uint64_t>(r))
              : Eigen::Vector3d::Zero();
      trace.delta_f_hz[r] = fit.delta_f_hz;
      trace.gamma1[r] = fit.gamma1;
      trace.gamma_phi[r] = fit.gamma_phi;
      trace.sigma_delta_f[r] = sigma[0];
      trace.sigma_gamma1[r] = sigma[1];
      trace.sigma_gamma_phi[r] = sigma[2];
      trace.flags[static_cast<std::size_t>(r)] =
          fit.flags | series.flags[static_cast<std::size_t>(r)];
    }
  });
  return trace;
}

std::pair<double, double> weighted_mean(std::span<const double> values,
                                        std::span<const double> sigmas) {
  if (values.size() != sigmas.size() || values.empty())
    throw DataError("weighted mean needs matching non-empty inputs");
  double exact_sum = 0.0;
  long exact_count = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (sigmas[i] < 0.0) throw DataError("negative sigma");
    if (sigmas[i] == 0.0) {
      exact_sum += values[i];
      ++exact_count;
    }
  }
  if (exact_count > 0) return {exact_sum / static_cast<double>(exact_count), 0.0};
  double sw = 0.0, swx = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double w = 1.0 / (sigmas[i] * sigmas[i]);
    sw += w;
    swx += w * values[i];
  }
  return {swx / sw, std::sqrt(1.0 / sw)};
}

}  // namespace qfluct
