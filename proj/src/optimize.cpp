#include "qfluct/optimize.hpp"

#include <algorithm>
#include <cmath>

#include "qfluct/errors.hpp"
#include "qfluct/rng.hpp"

namespace qfluct {

DeResult differential_evolution(const std::function<double(const Eigen::VectorXd&)>& objective,
                                const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                const std::vector<Eigen::VectorXd>& warm_starts,
                                const DeOptions& options) {
  const long dim = lower.size();
  if (upper.size() != dim || dim == 0) throw ConfigError("optimizer bounds have mismatched sizes");
  if ((upper.array() < lower.array()).any()) throw ConfigError("optimizer bounds are inverted");
  if (options.population < 4) throw ConfigError("population must be >= 4");
  if (options.max_generations < 1) throw ConfigError("max_generations must be >= 1");
  const int np = options.population;
  Rng rng(options.seed, options.stream);

  Eigen::MatrixXd pop(dim, np);
  Eigen::VectorXd cost(np);
  const Eigen::VectorXd span = upper - lower;
  for (int i = 0; i < np; ++i) {
    if (i < static_cast<int>(warm_starts.size())) {
      if (warm_starts[static_cast<std::size_t>(i)].size() != dim)
        throw ConfigError("warm start has wrong dimension");
      pop.col(i) = warm_starts[static_cast<std::size_t>(i)]
                       .cwiseMax(lower)
                       .cwiseMin(upper);
    } else {
      for (long d = 0; d < dim; ++d) pop(d, i) = lower[d] + span[d] * rng.uniform();
    }
    cost[i] = objective(pop.col(i));
  }

  int best = 0;
  cost.minCoeff(&best);
  DeResult result;
  Eigen::VectorXd trial(dim);
  for (int gen = 1; gen <= options.max_generations; ++gen) {
    for (int i = 0; i < np; ++i) {
      int r1 = i, r2 = i;
      while (r1 == i) r1 = static_cast<int>(rng.next_u32() % np);
      while (r2 == i || r2 == r1) r2 = static_cast<int>(rng.next_u32() % np);
      const long d_forced = static_cast<long>(rng.next_u32() % dim);
      for (long d = 0; d < dim; ++d) {
        if (d == d_forced || rng.uniform() < options.crossover) {
          double v = pop(d, best) + options.weight * (pop(d, r1) - pop(d, r2));
          if (v < lower[d]) v = lower[d];
          if (v > upper[d]) v = upper[d];
          trial[d] = v;
        } else {
          trial[d] = pop(d, i);
        }
      }
      const double c = objective(trial);
      if (c <= cost[i]) {
        pop.col(i) = trial;
        cost[i] = c;
        if (c < cost[best]) best = i;
      }
    }
    result.generations = gen;
    if (cost.maxCoeff() - cost[best] < options.tol) {
      result.converged = true;
      break;
    }
  }
  result.x = pop.col(best);
  result.value = cost[best];
  return result;
}

NmResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                     const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                     const Eigen::VectorXd& x0, int max_iter) {
  const long dim = lower.size();
  if (upper.size() != dim || x0.size() != dim || dim == 0)
    throw ConfigError("optimizer bounds have mismatched sizes");
  if ((upper.array() < lower.array()).any()) throw ConfigError("optimizer bounds are inverted");

  auto clip = [&](const Eigen::VectorXd& v) { return v.cwiseMax(lower).cwiseMin(upper).eval(); };

  const long m = dim + 1;
  std::vector<Eigen::VectorXd> vx(static_cast<std::size_t>(m));
  std::vector<double> vf(static_cast<std::size_t>(m));
  vx[0] = clip(x0);
  vf[0] = objective(vx[0]);
  for (long d = 0; d < dim; ++d) {
    Eigen::VectorXd p = vx[0];
    double step = 0.02 * (upper[d] - lower[d]);
    if (step <= 0.0) step = std::max(1e-8, 1e-4 * std::abs(p[d]));
    if (p[d] + step > upper[d]) step = -step;
    p[d] += step;
    vx[static_cast<std::size_t>(d + 1)] = clip(p);
    vf[static_cast<std::size_t>(d + 1)] = objective(vx[static_cast<std::size_t>(d + 1)]);
  }

  std::vector<long> order(static_cast<std::size_t>(m));
  auto sort_simplex = [&] {
    for (long i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(),
              [&](long a, long b) { return vf[static_cast<std::size_t>(a)] < vf[static_cast<std::size_t>(b)]; });
  };

  NmResult out;
  for (; out.iterations < max_iter; ++out.iterations) {
    sort_simplex();
    const long ib = order[0], iw = order[static_cast<std::size_t>(m - 1)];
    const long is = order[static_cast<std::size_t>(m - 2)];  // second worst
    if (vf[static_cast<std::size_t>(iw)] - vf[static_cast<std::size_t>(ib)] <=
        1e-13 * (std::abs(vf[static_cast<std::size_t>(ib)]) + 1e-300)) {
      out.converged = true;
      break;
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
    for (long i = 0; i < m; ++i)
      if (i != iw) centroid += vx[static_cast<std::size_t>(i)];
    centroid /= static_cast<double>(m - 1);

    const Eigen::VectorXd xr = clip(centroid + (centroid - vx[static_cast<std::size_t>(iw)]));
    const double fr = objective(xr);
    if (fr < vf[static_cast<std::size_t>(ib)]) {
      const Eigen::VectorXd xe = clip(centroid + 2.0 * (xr - centroid));
      const double fe = objective(xe);
      if (fe < fr) {
        vx[static_cast<std::size_t>(iw)] = xe;
        vf[static_cast<std::size_t>(iw)] = fe;
      } else {
        vx[static_cast<std::size_t>(iw)] = xr;
        vf[static_cast<std::size_t>(iw)] = fr;
      }
      continue;
    }
    if (fr < vf[static_cast<std::size_t>(is)]) {
      vx[static_cast<std::size_t>(iw)] = xr;
      vf[static_cast<std::size_t>(iw)] = fr;
      continue;
    }
    const bool outside = fr < vf[static_cast<std::size_t>(iw)];
    const Eigen::VectorXd xc =
        clip(centroid + 0.5 * ((outside ? xr : vx[static_cast<std::size_t>(iw)]) - centroid));
    const double fc = objective(xc);
    if (fc < std::min(fr, vf[static_cast<std::size_t>(iw)])) {
      vx[static_cast<std::size_t>(iw)] = xc;
      vf[static_cast<std::size_t>(iw)] = fc;
      continue;
    }
    for (long i = 0; i < m; ++i) {
      if (i == ib) continue;
      vx[static_cast<std::size_t>(i)] =
          clip(vx[static_cast<std::size_t>(ib)] +
               0.5 * (vx[static_cast<std::size_t>(i)] - vx[static_cast<std::size_t>(ib)]));
      vf[static_cast<std::size_t>(i)] = objective(vx[static_cast<std::size_t>(i)]);
    }
  }

  sort_simplex();
  out.x = vx[static_cast<std::size_t>(order[0])];
  out.value = vf[static_cast<std::size_t>(order[0])];
  return out;
}

}  // namespace qfluct
