#include <doctest.h>

#include <cmath>
#include <vector>

#include "qfluct/hmm.hpp"
#include "qfluct/rng.hpp"

using namespace qfluct;

namespace {

struct Synthetic {
  Eigen::ArrayXd x;
  std::vector<signed char> states;
};

Synthetic telegraph(long n, double mu0, double mu1, double sigma, double stay, uint64_t seed) {
  Rng rng(seed, 0);
  Synthetic out;
  out.x.resize(n);
  out.states.resize(static_cast<std::size_t>(n));
  signed char s = 0;
  for (long i = 0; i < n; ++i) {
    if (i > 0 && !rng.bernoulli(stay)) s = static_cast<signed char>(1 - s);
    out.states[static_cast<std::size_t>(i)] = s;
    out.x[i] = (s ? mu1 : mu0) + sigma * rng.normal();
  }
  return out;
}

}  // namespace

TEST_CASE("baum-welch recovers a well-separated telegraph") {
  const Synthetic data = telegraph(4000, -15e3, 15e3, 3e3, 0.95, 8);
  Hmm2Options options;
  const Hmm2Fit fit = fit_hmm2(data.x, options);
  CHECK(fit.converged);
  CHECK_FALSE(fit.degenerate);
  CHECK(fit.model.mu[0] == doctest::Approx(-15e3).epsilon(0.03));
  CHECK(fit.model.mu[1] == doctest::Approx(15e3).epsilon(0.03));
  CHECK(fit.model.sigma[0] == doctest::Approx(3e3).epsilon(0.10));
  CHECK(fit.model.trans(0, 0) == doctest::Approx(0.95).epsilon(0.03));
  CHECK(fit.model.mu[1] > fit.model.mu[0]);  // canonical order
  CHECK(fit.model.trans.row(0).sum() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(fit.model.trans.row(1).sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("viterbi path tracks the true states") {
  const Synthetic data = telegraph(3000, -20e3, 20e3, 4e3, 0.97, 12);
  const Hmm2Fit fit = fit_hmm2(data.x, Hmm2Options{});
  const std::vector<signed char> path = viterbi2(fit.model, data.x);
  REQUIRE(path.size() == data.states.size());
  long correct = 0;
  for (std::size_t i = 0; i < path.size(); ++i) correct += path[i] == data.states[i];
  CHECK(static_cast<double>(correct) / static_cast<double>(path.size()) > 0.97);
}

TEST_CASE("constant input is flagged degenerate, not crashed") {
  Eigen::ArrayXd x = Eigen::ArrayXd::Constant(500, 7e3);
  const Hmm2Fit fit = fit_hmm2(x, Hmm2Options{});
  CHECK(fit.degenerate);
  CHECK(std::isfinite(fit.mean_log10_likelihood));
  const auto path = viterbi2(fit.model, x);
  CHECK(path.size() == 500);
}

TEST_CASE("sigma floor holds even for noiseless input") {
  // Two exact levels: emission widths would collapse to zero without the floor.
  Eigen::ArrayXd x(40);
  for (long i = 0; i < 40; ++i) x[i] = (i / 10) % 2 ? 1000.0 : -1000.0;
  Hmm2Options options;
  options.sigma_floor = 25.0;
  const Hmm2Fit fit = fit_hmm2(x, options);
  CHECK(fit.model.sigma[0] >= 25.0);
  CHECK(fit.model.sigma[1] >= 25.0);
}

TEST_CASE("forward scan equals the batch likelihood at every prefix") {
  const Synthetic data = telegraph(300, -10e3, 10e3, 5e3, 0.9, 5);
  const Hmm2Fit fit = fit_hmm2(data.x, Hmm2Options{});
  ForwardScan scan(fit.model);
  for (long i = 0; i < data.x.size(); ++i) {
    scan.append(data.x[i]);
    if (i % 37 == 0 || i + 1 == data.x.size()) {
      const double batch = mean_log10_likelihood(fit.model, data.x.head(i + 1)) *
                           static_cast<double>(i + 1);
      REQUIRE(scan.log10_likelihood() ==
              doctest::Approx(batch).epsilon(1e-9));
    }
  }
  CHECK(scan.length() == data.x.size());
  scan.reset(fit.model);
  CHECK(scan.length() == 0);
  CHECK(scan.log10_likelihood() == 0.0);
}

TEST_CASE("warm start from the truth cannot lose likelihood") {
  const Synthetic data = telegraph(1500, -12e3, 12e3, 4e3, 0.93, 3);
  Hmm2 truth;
  truth.mu = {-12e3, 12e3};
  truth.sigma = {4e3, 4e3};
  truth.trans << 0.93, 0.07, 0.07, 0.93;
  const double before = mean_log10_likelihood(truth, data.x);
  const Hmm2Fit fit = fit_hmm2(data.x, truth, Hmm2Options{});
  CHECK(fit.mean_log10_likelihood >= before - 1e-9);
}
