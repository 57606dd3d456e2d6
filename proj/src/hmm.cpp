#include "qfluct/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qfluct/errors.hpp"

namespace qfluct {

namespace {

constexpr double kDensityFloor = 1e-300;
// Re-estimated transition probabilities never reach 0 or 1: a zero entry
// makes a state absorbing, and one later off-state observation then drives
// every forward scale to 0 (likelihood NaN) with no way back.
constexpr double kTransFloor = 1e-6;
constexpr double kLog10E = 0.43429448190325182765;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double gauss(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return std::max(kInvSqrt2Pi / sigma * std::exp(-0.5 * z * z), kDensityFloor);
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

void canonicalize(Hmm2& m) {
  if (m.mu[0] <= m.mu[1]) return;
  std::swap(m.mu[0], m.mu[1]);
  std::swap(m.sigma[0], m.sigma[1]);
  std::swap(m.start[0], m.start[1]);
  m.trans = Eigen::Matrix2d{{m.trans(1, 1), m.trans(1, 0)}, {m.trans(0, 1), m.trans(0, 0)}};
}

}  // namespace

Hmm2 initial_model(Eigen::Ref<const Eigen::ArrayXd> x, double sigma_floor) {
  if (x.size() < 1) throw DataError("cannot initialize a model from an empty sequence");
  std::vector<double> sorted(x.data(), x.data() + x.size());
  std::sort(sorted.begin(), sorted.end());
  Hmm2 m;
  m.mu[0] = quantile_sorted(sorted, 0.25);
  m.mu[1] = quantile_sorted(sorted, 0.75);
  const double half_iqr = (m.mu[1] - m.mu[0]) / 2.0;
  m.sigma.setConstant(std::max(half_iqr, sigma_floor));
  m.trans << 0.9, 0.1, 0.1, 0.9;
  m.start << 0.5, 0.5;
  return m;
}

Hmm2Fit fit_hmm2(Eigen::Ref<const Eigen::ArrayXd> x, const Hmm2& init,
                 const Hmm2Options& options) {
  const long n = x.size();
  if (n < 2) throw DataError("model fit needs at least two points");
  if (!(options.sigma_floor > 0.0)) throw ConfigError("sigma_floor must be > 0");
  Hmm2 m = init;
  m.sigma = m.sigma.cwiseMax(options.sigma_floor);

  Eigen::ArrayX2d b(n, 2);       // emission densities
  Eigen::ArrayX2d alpha(n, 2);   // scaled forward
  Eigen::ArrayX2d beta(n, 2);    // scaled backward
  Eigen::ArrayXd scale(n);
  Hmm2Fit fit;
  double prev_ll = 0.0;
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    for (long t = 0; t < n; ++t) {
      b(t, 0) = gauss(x[t], m.mu[0], m.sigma[0]);
      b(t, 1) = gauss(x[t], m.mu[1], m.sigma[1]);
    }
    // forward
    alpha(0, 0) = m.start[0] * b(0, 0);
    alpha(0, 1) = m.start[1] * b(0, 1);
    scale[0] = alpha.row(0).sum();
    alpha.row(0) /= scale[0];
    for (long t = 1; t < n; ++t) {
      alpha(t, 0) = (alpha(t - 1, 0) * m.trans(0, 0) + alpha(t - 1, 1) * m.trans(1, 0)) * b(t, 0);
      alpha(t, 1) = (alpha(t - 1, 0) * m.trans(0, 1) + alpha(t - 1, 1) * m.trans(1, 1)) * b(t, 1);
      scale[t] = alpha.row(t).sum();
      alpha.row(t) /= scale[t];
    }
    const double ll = scale.log().sum();  // natural log
    // backward
    beta(n - 1, 0) = 1.0;
    beta(n - 1, 1) = 1.0;
    for (long t = n - 2; t >= 0; --t) {
      beta(t, 0) = (m.trans(0, 0) * b(t + 1, 0) * beta(t + 1, 0) +
                    m.trans(0, 1) * b(t + 1, 1) * beta(t + 1, 1)) /
                   scale[t + 1];
      beta(t, 1) = (m.trans(1, 0) * b(t + 1, 0) * beta(t + 1, 0) +
                    m.trans(1, 1) * b(t + 1, 1) * beta(t + 1, 1)) /
                   scale[t + 1];
    }
    // posteriors and sufficient statistics
    Eigen::ArrayX2d gamma = alpha * beta;
    gamma.colwise() /= gamma.rowwise().sum();
    Eigen::Matrix2d xi_sum = Eigen::Matrix2d::Zero();
    for (long t = 0; t + 1 < n; ++t) {
      Eigen::Matrix2d xi;
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
          xi(i, j) = alpha(t, i) * m.trans(i, j) * b(t + 1, j) * beta(t + 1, j) / scale[t + 1];
      xi_sum += xi;
    }
    // updates
    for (int k = 0; k < 2; ++k) {
      const double mass = gamma.col(k).sum();
      const double mu = (gamma.col(k) * x).sum() / mass;
      const double var = (gamma.col(k) * (x - mu).square()).sum() / mass;
      m.mu[k] = mu;
      m.sigma[k] = std::max(std::sqrt(var), options.sigma_floor);
      const double row = xi_sum.row(k).sum();
      if (row > 0.0) {
        const double t0 = std::max(xi_sum(k, 0) / row, kTransFloor);
        const double t1 = std::max(xi_sum(k, 1) / row, kTransFloor);
        m.trans(k, 0) = t0 / (t0 + t1);
        m.trans(k, 1) = t1 / (t0 + t1);
      }
      m.start[k] = gamma(0, k);
    }
    fit.iterations = iter;
    if (iter > 1 && std::abs(ll - prev_ll) < options.tol * std::abs(prev_ll)) {
      fit.converged = true;
      prev_ll = ll;
      break;
    }
    prev_ll = ll;
  }
  canonicalize(m);
  fit.model = m;
  fit.mean_log10_likelihood = mean_log10_likelihood(m, x);
  // A non-finite likelihood ranks below every candidate and fails every
  // threshold; NaN would silently win both comparisons.
  if (std::isnan(fit.mean_log10_likelihood))
    fit.mean_log10_likelihood = -std::numeric_limits<double>::infinity();
  fit.degenerate = (m.mu[1] - m.mu[0]) < options.sigma_floor * 1e-9;
  return fit;
}

Hmm2Fit fit_hmm2(Eigen::Ref<const Eigen::ArrayXd> x, const Hmm2Options& options) {
  return fit_hmm2(x, initial_model(x, options.sigma_floor), options);
}

double mean_log10_likelihood(const Hmm2& m, Eigen::Ref<const Eigen::ArrayXd> x) {
  ForwardScan scan(m);
  for (long t = 0; t < x.size(); ++t) scan.append(x[t]);
  return scan.log10_likelihood() / static_cast<double>(x.size());
}

std::vector<signed char> viterbi2(const Hmm2& m, Eigen::Ref<const Eigen::ArrayXd> x) {
  const long n = x.size();
  if (n == 0) return {};
  const Eigen::Matrix2d log_a = m.trans.array().max(kDensityFloor).log().matrix();
  Eigen::Vector2d score{std::log(std::max(m.start[0], kDensityFloor)) +
                            std::log(gauss(x[0], m.mu[0], m.sigma[0])),
                        std::log(std::max(m.start[1], kDensityFloor)) +
                            std::log(gauss(x[0], m.mu[1], m.sigma[1]))};
  Eigen::ArrayX2<signed char> back(n, 2);
  for (long t = 1; t < n; ++t) {
    Eigen::Vector2d next;
    for (int j = 0; j < 2; ++j) {
      const double from0 = score[0] + log_a(0, j);
      const double from1 = score[1] + log_a(1, j);
      back(t, j) = from1 > from0 ? 1 : 0;
      next[j] = std::max(from0, from1) + std::log(gauss(x[t], m.mu[j], m.sigma[j]));
    }
    score = next;
  }
  std::vector<signed char> path(static_cast<std::size_t>(n));
  path[static_cast<std::size_t>(n - 1)] = score[1] > score[0] ? 1 : 0;
  for (long t = n - 1; t > 0; --t)
    path[static_cast<std::size_t>(t - 1)] = back(t, path[static_cast<std::size_t>(t)]);
  return path;
}

void ForwardScan::reset(const Hmm2& model) {
  model_ = model;
  alpha_.setZero();
  log10_sum_ = 0.0;
  length_ = 0;
}

void ForwardScan::append(double x) {
  const Eigen::Vector2d b{gauss(x, model_.mu[0], model_.sigma[0]),
                          gauss(x, model_.mu[1], model_.sigma[1])};
  Eigen::Vector2d next;
  if (length_ == 0) {
    next[0] = model_.start[0] * b[0];
    next[1] = model_.start[1] * b[1];
  } else {
    next[0] = (alpha_[0] * model_.trans(0, 0) + alpha_[1] * model_.trans(1, 0)) * b[0];
    next[1] = (alpha_[0] * model_.trans(0, 1) + alpha_[1] * model_.trans(1, 1)) * b[1];
  }
  const double scale = next.sum();
  alpha_ = next / scale;
  log10_sum_ += std::log10(scale);
  ++length_;
}

}  // namespace qfluct
