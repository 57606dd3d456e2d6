#include "qfluct/hdfa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <vector>

#include "qfluct/errors.hpp"
#include "qfluct/parallel.hpp"

namespace qfluct {

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    std::nth_element(v.begin(), v.begin() + static_cast<long>(mid) - 1, v.begin() + static_cast<long>(mid));
    m = 0.5 * (m + v[mid - 1]);
  }
  return m;
}

Hmm2 seed_model(double x0, double sigma_floor) {
  Hmm2 m;
  m.mu = Eigen::Vector2d(x0, x0);
  m.sigma = Eigen::Vector2d(sigma_floor, sigma_floor);
  return m;
}

// Quantile initialization collapses when one state holds under a quarter of
// the span; seeding from the range extremes lets Baum-Welch find a minority
// cluster. Only ever used as an extra candidate, so a bad seed costs nothing.
Hmm2 extreme_model(Eigen::Ref<const Eigen::ArrayXd> x, double sigma_floor) {
  Hmm2 m;
  m.mu = Eigen::Vector2d(x.minCoeff(), x.maxCoeff());
  m.sigma.setConstant(std::max((m.mu[1] - m.mu[0]) / 4.0, sigma_floor));
  return m;
}

// Best emission density over both states, per point. Transition costs are
// deliberately ignored: this asks whether any state explains the point.
double point_ll10(const Hmm2& m, double x) {
  double best = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < 2; ++k) {
    const double z = (x - m.mu[k]) / m.sigma[k];
    best = std::max(best, -0.5 * z * z * 0.43429448190325183 -
                              std::log10(std::sqrt(2.0 * M_PI) * m.sigma[k]));
  }
  return best;
}

struct SetStats {
  double mean = 0.0, wsd = 0.0, se = 0.0;
};

// Inverse-variance statistics of a small set. Entries with sigma == 0 are
// exact and dominate: the stats then reduce to unweighted ones over the
// exact entries with zero standard error.
SetStats weighted_set_stats(const std::vector<double>& v, const std::vector<double>& s) {
  SetStats out;
  const size_t n = v.size();
  bool any_exact = false;
  for (double si : s)
    if (si <= 0.0) { any_exact = true; break; }
  if (any_exact) {
    double sum = 0.0;
    long m = 0;
    for (size_t i = 0; i < n; ++i)
      if (s[i] <= 0.0) { sum += v[i]; ++m; }
    out.mean = sum / static_cast<double>(m);
    double ss = 0.0;
    for (size_t i = 0; i < n; ++i)
      if (s[i] <= 0.0) ss += (v[i] - out.mean) * (v[i] - out.mean);
    out.wsd = std::sqrt(ss / static_cast<double>(m));
    return out;
  }
  double wsum = 0.0, acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double w = 1.0 / (s[i] * s[i]);
    wsum += w;
    acc += w * v[i];
  }
  out.mean = acc / wsum;
  double ss = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double w = 1.0 / (s[i] * s[i]);
    ss += w * (v[i] - out.mean) * (v[i] - out.mean);
  }
  out.wsd = std::sqrt(ss / wsum);
  out.se = std::sqrt(1.0 / wsum);
  return out;
}

}  // namespace

std::vector<Segment> segment_series(Eigen::Ref<const Eigen::ArrayXd> x,
                                    const SegmentationOptions& options) {
  if (options.l_min < 2) throw ConfigError("segmentation: minimum segment length must be at least 2");
  const long n = x.size();
  std::vector<Segment> out;
  if (n == 0) return out;

  // Refits during growth run shorter Baum-Welch chains; decisions are
  // re-confirmed with a full fit before any termination.
  Hmm2Options grow = options.hmm;
  grow.max_iter = std::min(grow.max_iter, 40);

  long begin = 0;
  Hmm2 cur = seed_model(x[0], options.hmm.sigma_floor);
  ForwardScan fs(cur);
  fs.append(x[0]);
  long next_refit = 2;

  auto refit = [&](long plen, bool full) {
    auto seg = x.segment(begin, plen);
    const Hmm2Options& ho = full ? options.hmm : grow;
    Hmm2Fit best = fit_hmm2(seg, cur, ho);
    if (full || plen <= 64) {
      Hmm2Fit fresh = fit_hmm2(seg, ho);
      if (fresh.mean_log10_likelihood > best.mean_log10_likelihood) best = fresh;
      Hmm2Fit wide = fit_hmm2(seg, extreme_model(seg, ho.sigma_floor), ho);
      if (wide.mean_log10_likelihood > best.mean_log10_likelihood) best = wide;
    }
    return best;
  };
  auto adopt = [&](const Hmm2& model, long plen) {
    cur = model;
    fs.reset(cur);
    for (long i = 0; i < plen; ++i) fs.append(x[begin + i]);
    next_refit = plen + std::max<long>(1, plen / 16);
  };
  auto close_segment = [&](long endpos) {
    Segment seg;
    seg.begin = begin;
    seg.end = endpos;
    const long plen = endpos - begin;
    auto v = x.segment(begin, plen);
    if (plen >= 2) {
      Hmm2Fit fin = fit_hmm2(v, cur, options.hmm);
      Hmm2Fit alt = fit_hmm2(v, options.hmm);
      if (alt.mean_log10_likelihood > fin.mean_log10_likelihood) fin = alt;
      Hmm2Fit wide = fit_hmm2(v, extreme_model(v, options.hmm.sigma_floor), options.hmm);
      if (wide.mean_log10_likelihood > fin.mean_log10_likelihood) fin = wide;
      seg.model = fin.model;
      seg.mean_ll10 = fin.mean_log10_likelihood;
      if (fin.degenerate) seg.flags |= kFlagDegenerate;
    } else {
      seg.model = cur;
      seg.mean_ll10 = mean_log10_likelihood(cur, v);
    }
    const auto path = viterbi2(seg.model, v);
    seg.s.resize(path.size());
    for (size_t i = 0; i < path.size(); ++i) seg.s[i] = path[i] ? +1 : -1;
    out.push_back(std::move(seg));
  };

  for (long pos = 1; pos < n; ++pos) {
    fs.append(x[pos]);
    const long plen = pos - begin + 1;  // includes the candidate point
    double mll;
    bool fresh = false;
    if (plen <= 32 || plen >= next_refit) {
      const Hmm2Fit fit = refit(plen, false);
      adopt(fit.model, plen);
      mll = fit.mean_log10_likelihood;
      fresh = true;
    } else {
      mll = fs.log10_likelihood() / static_cast<double>(plen);
    }
    if (mll < options.lambda_ll && plen - 1 >= options.l_min) {
      if (!fresh) {
        // A stale-model likelihood can only understate the refit one;
        // confirm the crossing before terminating.
        const Hmm2Fit fit = refit(plen, true);
        if (fit.mean_log10_likelihood >= options.lambda_ll) {
          adopt(fit.model, plen);
          continue;
        }
      }
      // The tail points that drove the likelihood under the threshold belong
      // to the next regime; hand the contiguous run of unexplained points
      // over instead of leaving them to contaminate this segment's blocks.
      const double crater = options.lambda_ll - 2.0;
      long cut = pos;
      while (cut - 1 >= begin + options.l_min && point_ll10(cur, x[cut - 1]) < crater) --cut;
      close_segment(cut);
      begin = cut;
      cur = seed_model(x[cut], options.hmm.sigma_floor);
      fs.reset(cur);
      for (long i = cut; i <= pos; ++i) fs.append(x[i]);
      next_refit = 2;
    }
  }
  close_segment(n);
  return out;
}

void summarize_segment(Eigen::Ref<const Eigen::ArrayXd> x, Eigen::Ref<const Eigen::ArrayXd> sigma,
                       Segment& seg) {
  const long len = seg.length();
  if (len <= 0 || static_cast<long>(seg.s.size()) != len)
    throw DataError("segment summary: state path does not match the span");
  if (sigma.size() != x.size()) throw DataError("segment summary: sigma length differs from series");

  seg.blocks.clear();
  long b = seg.begin;
  std::vector<double> bv, bs;
  for (long i = seg.begin + 1; i <= seg.end; ++i) {
    if (i < seg.end && seg.s[i - seg.begin] == seg.s[b - seg.begin]) continue;
    Block blk;
    blk.begin = b;
    blk.end = i;
    bv.assign(x.data() + b, x.data() + i);
    bs.assign(sigma.data() + b, sigma.data() + i);
    const SetStats st = weighted_set_stats(bv, bs);
    blk.mean = st.mean;
    blk.se = st.se;
    seg.blocks.push_back(blk);
    b = i;
  }

  const long m = static_cast<long>(seg.blocks.size());
  if (m == 1) {
    seg.f_c = seg.blocks[0].mean;
    seg.f_delta = 0.0;
    seg.sigma1_fc = seg.blocks[0].se;
    seg.sigma1_fdelta = seg.blocks[0].se;
    seg.flags |= kFlagSingleState;
    return;
  }
  std::vector<double> mid(m - 1), mid_s(m - 1), dif(m - 1), dif_s(m - 1);
  for (long p = 0; p + 1 < m; ++p) {
    const Block& a = seg.blocks[p];
    const Block& c = seg.blocks[p + 1];
    mid[p] = 0.5 * (a.mean + c.mean);
    mid_s[p] = 0.5 * (a.se + c.se);
    dif[p] = std::abs(a.mean - c.mean);
    dif_s[p] = a.se + c.se;
  }
  const SetStats cs = weighted_set_stats(mid, mid_s);
  const SetStats ds = weighted_set_stats(dif, dif_s);
  seg.f_c = cs.mean;
  seg.sigma1_fc = std::max(cs.wsd, cs.se);
  seg.f_delta = ds.mean;
  seg.sigma1_fdelta = std::max(ds.wsd, ds.se);
}

Eigen::ArrayXd default_lambda_grid(Eigen::Ref<const Eigen::ArrayXd> x, const Hmm2Options& hmm,
                                   int n_candidates, long pilot_chunk) {
  if (n_candidates < 4) throw ConfigError("lambda grid: need at least 4 candidates");
  const long n = x.size();
  if (n < 2) throw DataError("lambda grid: series too short");
  pilot_chunk = std::max<long>(8, pilot_chunk);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (long b = 0; b < n; b += pilot_chunk) {
    const long len = std::min(pilot_chunk, n - b);
    if (len < 2) break;
    const Hmm2Fit fit = fit_hmm2(x.segment(b, len), hmm);
    lo = std::min(lo, fit.mean_log10_likelihood);
    hi = std::max(hi, fit.mean_log10_likelihood);
  }
  // Thresholds live on the negative axis; widen the observed range until
  // it covers at least two decades of magnitude.
  hi = std::min(hi, -1e-9);
  lo = std::min(lo, hi);
  double mag_lo = -hi, mag_hi = -lo;
  const double ratio = mag_hi / mag_lo;
  if (ratio < 100.0) {
    const double s = std::sqrt(100.0 / ratio);
    mag_hi *= s;
    mag_lo /= s;
  }
  Eigen::ArrayXd grid(n_candidates);
  const double la = std::log10(mag_hi), lb = std::log10(mag_lo);
  for (int k = 0; k < n_candidates; ++k) {
    const double f = static_cast<double>(k) / (n_candidates - 1);
    grid[k] = -std::pow(10.0, la + (lb - la) * f);
  }
  return grid;
}

LambdaSelection select_lambda_ll(Eigen::Ref<const Eigen::ArrayXd> x,
                                 Eigen::Ref<const Eigen::ArrayXd> candidates,
                                 const Hmm2Options& hmm, int workers) {
  const long k = candidates.size();
  if (k < 4) throw ConfigError("lambda selection: need at least 4 candidates");
  for (long i = 1; i < k; ++i)
    if (!(candidates[i] > candidates[i - 1]))
      throw ConfigError("lambda selection: candidates must be strictly increasing");

  LambdaSelection sel;
  sel.candidates = candidates;
  sel.n_cp.resize(k);
  Eigen::ArrayXd& ncp = sel.n_cp;
  parallel_for(static_cast<size_t>(k), workers, [&](size_t i) {
    SegmentationOptions o;
    o.lambda_ll = candidates[static_cast<long>(i)];
    o.l_min = 2;
    o.hmm = hmm;
    ncp[static_cast<long>(i)] = static_cast<double>(segment_series(x, o).size() - 1);
  });

  double best = 0.0;
  long best_k = -1;
  for (long i = 1; i + 1 < k; ++i) {
    const double d2 = ncp[i + 1] - 2.0 * ncp[i] + ncp[i - 1];
    if (d2 > best) {
      best = d2;
      best_k = i;
    }
  }
  if (best_k < 0) {
    sel.flat = true;
    sel.lambda_ll = candidates[0];
    sel.warning = "change-point curve has no elbow; falling back to the most permissive threshold";
  } else {
    // When the count blows up superlinearly the curvature maximum sits one or
    // more steps inside the explosion, where segmentation is already shattered.
    // Back off to the edge of the plateau that precedes the rise.
    while (best_k > 1 && ncp[best_k] - 2.0 * ncp[best_k - 1] + ncp[best_k - 2] > 0.0) --best_k;
    sel.lambda_ll = candidates[best_k];
  }
  return sel;
}

namespace {

double reconstruction_rmse(Eigen::Ref<const Eigen::ArrayXd> x, Eigen::Ref<const Eigen::ArrayXd> sigma,
                           double lambda_ll, long l_min, const Hmm2Options& hmm) {
  SegmentationOptions o;
  o.lambda_ll = lambda_ll;
  o.l_min = l_min;
  o.hmm = hmm;
  auto segments = segment_series(x, o);
  double ss = 0.0;
  for (auto& seg : segments) {
    summarize_segment(x, sigma, seg);
    for (long i = seg.begin; i < seg.end; ++i) {
      const double pred = seg.f_c + 0.5 * seg.f_delta * static_cast<double>(seg.s[i - seg.begin]);
      ss += (x[i] - pred) * (x[i] - pred);
    }
  }
  return std::sqrt(ss / static_cast<double>(x.size()));
}

}  // namespace

LminSelection select_l_min(Eigen::Ref<const Eigen::ArrayXd> x,
                           Eigen::Ref<const Eigen::ArrayXd> sigma, double lambda_ll,
                           const std::vector<long>& candidates, const Hmm2Options& hmm,
                           double rel_tol, int workers) {
  if (candidates.empty()) throw ConfigError("minimum-length selection: candidate list is empty");
  LminSelection sel;
  sel.candidates = candidates;
  for (long& c : sel.candidates) c = std::max<long>(2, c);
  std::sort(sel.candidates.begin(), sel.candidates.end());
  sel.candidates.erase(std::unique(sel.candidates.begin(), sel.candidates.end()), sel.candidates.end());

  const size_t k = sel.candidates.size();
  sel.rmse.resize(static_cast<long>(k));
  Eigen::ArrayXd& rmse = sel.rmse;
  const std::vector<long>& cand = sel.candidates;
  parallel_for(k, workers, [&](size_t i) {
    rmse[static_cast<long>(i)] = reconstruction_rmse(x, sigma, lambda_ll, cand[i], hmm);
  });

  const double best = rmse.minCoeff();
  sel.l_min = cand.back();
  for (size_t i = 0; i < k; ++i) {
    if (rmse[static_cast<long>(i)] <= best * (1.0 + rel_tol)) {
      sel.l_min = cand[i];
      break;
    }
  }
  return sel;
}

LevelSeries level_series(long n, const std::vector<Segment>& segments) {
  LevelSeries out;
  out.f_c.setZero(n);
  out.f_delta.setZero(n);
  out.sigma1_fc.setZero(n);
  out.sigma1_fdelta.setZero(n);
  out.s.assign(static_cast<size_t>(n), -1);
  out.flags.assign(static_cast<size_t>(n), 0);
  for (const Segment& seg : segments) {
    for (long i = seg.begin; i < seg.end && i < n; ++i) {
      out.f_c[i] = seg.f_c;
      out.f_delta[i] = seg.f_delta;
      out.sigma1_fc[i] = seg.sigma1_fc;
      out.sigma1_fdelta[i] = seg.sigma1_fdelta;
      out.s[static_cast<size_t>(i)] = seg.s[i - seg.begin];
      out.flags[static_cast<size_t>(i)] = seg.flags;
    }
  }
  return out;
}

SpreadUncertainty hyperparameter_spread_uncertainty(Eigen::Ref<const Eigen::ArrayXd> x,
                                                    Eigen::Ref<const Eigen::ArrayXd> sigma,
                                                    double lambda_ll, long l_min,
                                                    const Hmm2Options& hmm, int steps,
                                                    double half_width, int workers) {
  const long n = x.size();
  SpreadUncertainty out;
  out.sigma2_fc.setZero(n);
  out.sigma2_fdelta.setZero(n);
  if (steps <= 1) return out;

  Eigen::ArrayXd sum_c = Eigen::ArrayXd::Zero(n), ss_c = Eigen::ArrayXd::Zero(n);
  Eigen::ArrayXd sum_d = Eigen::ArrayXd::Zero(n), ss_d = Eigen::ArrayXd::Zero(n);
  std::mutex acc_mutex;
  const long combos = static_cast<long>(steps) * steps;
  parallel_for(static_cast<size_t>(combos), workers, [&](size_t idx) {
    const int iu = static_cast<int>(idx) / steps;
    const int iv = static_cast<int>(idx) % steps;
    const double u = 1.0 - half_width + 2.0 * half_width * iu / (steps - 1);
    const double v = 1.0 - half_width + 2.0 * half_width * iv / (steps - 1);
    SegmentationOptions o;
    o.lambda_ll = lambda_ll * u;
    o.l_min = std::max<long>(2, std::lround(static_cast<double>(l_min) * v));
    o.hmm = hmm;
    auto segments = segment_series(x, o);
    Eigen::ArrayXd fc(n), fd(n);
    for (auto& seg : segments) {
      summarize_segment(x, sigma, seg);
      for (long i = seg.begin; i < seg.end; ++i) {
        fc[i] = seg.f_c;
        fd[i] = seg.f_delta;
      }
    }
    std::lock_guard<std::mutex> lock(acc_mutex);
    sum_c += fc;
    ss_c += fc.square();
    sum_d += fd;
    ss_d += fd.square();
  });

  const double r = static_cast<double>(combos);
  out.sigma2_fc = ((ss_c - sum_c.square() / r) / (r - 1.0)).max(0.0).sqrt();
  out.sigma2_fdelta = ((ss_d - sum_d.square() / r) / (r - 1.0)).max(0.0).sqrt();
  return out;
}

std::vector<RtnLevel> run_hierarchy(Eigen::Ref<const Eigen::ArrayXd> t_s,
                                    Eigen::Ref<const Eigen::ArrayXd> f,
                                    Eigen::Ref<const Eigen::ArrayXd> sigma,
                                    const HierarchyOptions& options) {
  const long n = f.size();
  if (t_s.size() != n || sigma.size() != n) throw DataError("hierarchy: series lengths differ");
  if (n < 4) throw DataError("hierarchy: need at least 4 points");
  for (long i = 1; i < n; ++i)
    if (!(t_s[i] > t_s[i - 1])) throw DataError("hierarchy: timestamps must be strictly increasing");

  std::vector<double> steps(static_cast<size_t>(n - 1));
  for (long i = 0; i + 1 < n; ++i) steps[static_cast<size_t>(i)] = t_s[i + 1] - t_s[i];
  const double dt_med = median_of(std::move(steps));

  std::vector<RtnLevel> levels;
  Eigen::ArrayXd cur_f = f, cur_sigma = sigma;
  for (int lev = 1; lev <= options.max_levels; ++lev) {
    RtnLevel level;
    level.level = lev;
    level.f_in = cur_f;
    level.sigma_in = cur_sigma;

    Hmm2Options hmm = options.hmm;
    {
      std::vector<double> sv(cur_sigma.data(), cur_sigma.data() + n);
      hmm.sigma_floor = std::max(options.hmm.sigma_floor, median_of(std::move(sv)));
    }
    if (options.lambda_ll != 0.0) {
      level.lambda_ll = options.lambda_ll;
    } else {
      const Eigen::ArrayXd grid = default_lambda_grid(cur_f, hmm, options.n_lambda, options.pilot_chunk);
      level.lambda_curve = select_lambda_ll(cur_f, grid, hmm, options.workers);
      level.lambda_ll = level.lambda_curve.lambda_ll;
    }
    if (options.l_min >= 2) {
      level.l_min = options.l_min;
    } else {
      level.lmin_curve = select_l_min(cur_f, cur_sigma, level.lambda_ll, options.l_min_candidates,
                                      hmm, options.l_min_rel_tol, options.workers);
      level.l_min = level.lmin_curve.l_min;
    }

    SegmentationOptions sopt;
    sopt.lambda_ll = level.lambda_ll;
    sopt.l_min = level.l_min;
    sopt.hmm = hmm;
    level.segments = segment_series(cur_f, sopt);
    for (auto& seg : level.segments) summarize_segment(cur_f, cur_sigma, seg);
    level.series = level_series(n, level.segments);

    level.spread = hyperparameter_spread_uncertainty(cur_f, cur_sigma, level.lambda_ll, level.l_min,
                                                     hmm, options.spread_steps,
                                                     options.spread_half_width, options.workers);
    level.sigma_fc = (level.series.sigma1_fc.square() + level.spread.sigma2_fc.square()).sqrt();
    level.sigma_fdelta =
        (level.series.sigma1_fdelta.square() + level.spread.sigma2_fdelta.square()).sqrt();

    long masked = 0;
    for (long i = 0; i < n; ++i) {
      if (level.series.f_delta[i] < 2.0 * level.sigma_fdelta[i]) {
        level.series.flags[static_cast<size_t>(i)] |= kFlagMasked;
        ++masked;
      }
    }
    level.zero_delta_fraction = static_cast<double>(masked) / static_cast<double>(n);

    std::vector<signed char> st(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) st[static_cast<size_t>(i)] = level.series.s[static_cast<size_t>(i)] > 0 ? 1 : 0;
    const double window = options.rate_window_s * std::pow(10.0, lev - 1);
    level.rates = switching_rates(st.data(), t_s.data(), level.series.flags.data(), n,
                                  dt_med * static_cast<double>(level.l_min), window,
                                  options.gap_factor);
    level.transitions = level.rates.up.transitions + level.rates.down.transitions;
    level.active = level.transitions >= options.min_transitions &&
                   level.zero_delta_fraction <= options.zero_fraction;

    const bool descend = level.active && lev < options.max_levels;
    levels.push_back(std::move(level));
    if (!descend) break;
    cur_f = levels.back().series.f_c;  // recursion identity, exact by construction
    cur_sigma = levels.back().sigma_fc;
  }
  return levels;
}

Eigen::ArrayXd hierarchy_reconstruction(const std::vector<RtnLevel>& levels) {
  if (levels.empty()) return {};
  Eigen::ArrayXd recon = levels.back().series.f_c;
  for (const RtnLevel& level : levels) {
    for (long i = 0; i < recon.size(); ++i)
      recon[i] += 0.5 * level.series.f_delta[i] * static_cast<double>(level.series.s[static_cast<size_t>(i)]);
  }
  return recon;
}

}  // namespace qfluct
