#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "qfluct/hmm.hpp"
#include "qfluct/rates.hpp"

namespace qfluct {

// One maximal constant-state run inside a segment.
struct Block {
  long begin = 0, end = 0;  // [begin, end), absolute indices
  double mean = 0.0;
  double se = 0.0;
};

struct Segment {
  long begin = 0, end = 0;  // [begin, end)
  Hmm2 model;
  double mean_ll10 = 0.0;
  std::vector<signed char> s;  // per point, -1 low / +1 high
  std::vector<Block> blocks;
  double f_c = 0.0;
  double f_delta = 0.0;        // >= 0
  double sigma1_fc = 0.0;
  double sigma1_fdelta = 0.0;
  uint32_t flags = 0;
  long length() const { return end - begin; }
};

struct SegmentationOptions {
  double lambda_ll = -4.0;  // mean per-point log10-likelihood threshold
  long l_min = 2;
  Hmm2Options hmm;
};

// Sequential scan: each point joins the current segment unless the refit
// mean-log-likelihood drops below lambda_ll while the segment already has
// at least l_min points, in which case the segment closes and the point
// starts the next one. Throws ConfigError for l_min < 2.
std::vector<Segment> segment_series(Eigen::Ref<const Eigen::ArrayXd> x,
                                    const SegmentationOptions& options);

// Fills blocks and the (f_c, f_delta) summary with first-kind
// uncertainties from the per-point input sigmas.
void summarize_segment(Eigen::Ref<const Eigen::ArrayXd> x, Eigen::Ref<const Eigen::ArrayXd> sigma,
                       Segment& seg);

struct LambdaSelection {
  double lambda_ll = 0.0;
  Eigen::ArrayXd candidates;  // ascending: permissive to strict
  Eigen::ArrayXd n_cp;        // change points per candidate
  bool flat = false;
  std::string warning;
};

// Candidate grid from a pilot pass: chunk the series, fit each chunk,
// log-space n_candidates thresholds over the observed mean-log-likelihood
// range widened to span at least two decades.
Eigen::ArrayXd default_lambda_grid(Eigen::Ref<const Eigen::ArrayXd> x, const Hmm2Options& hmm,
                                   int n_candidates = 40, long pilot_chunk = 256);

// Elbow of the change-point count curve at l_min = 2: the candidate with
// the largest discrete second difference. Flat curves fall back to the
// most permissive candidate with a warning.
LambdaSelection select_lambda_ll(Eigen::Ref<const Eigen::ArrayXd> x,
                                 Eigen::Ref<const Eigen::ArrayXd> candidates,
                                 const Hmm2Options& hmm, int workers = 1);

struct LminSelection {
  long l_min = 2;
  std::vector<long> candidates;
  Eigen::ArrayXd rmse;
};

// Smallest candidate whose reconstruction RMSE is within rel_tol of the
// best candidate's.
LminSelection select_l_min(Eigen::Ref<const Eigen::ArrayXd> x,
                           Eigen::Ref<const Eigen::ArrayXd> sigma, double lambda_ll,
                           const std::vector<long>& candidates, const Hmm2Options& hmm,
                           double rel_tol = 0.02, int workers = 1);

// Piecewise-constant per-point expansion of a segmentation.
struct LevelSeries {
  Eigen::ArrayXd f_c, f_delta;
  Eigen::ArrayXd sigma1_fc, sigma1_fdelta;
  std::vector<signed char> s;  // -1 / +1
  std::vector<uint32_t> flags;
};

LevelSeries level_series(long n, const std::vector<Segment>& segments);

struct SpreadUncertainty {
  Eigen::ArrayXd sigma2_fc, sigma2_fdelta;  // per point, across hyperparameter grid
};

// Second-kind uncertainty: rerun the segmentation over a multiplier grid
// (steps x steps, centered on 1) applied to both hyperparameters and take
// the per-point standard deviation of f_c and f_delta across runs.
SpreadUncertainty hyperparameter_spread_uncertainty(Eigen::Ref<const Eigen::ArrayXd> x,
                                                    Eigen::Ref<const Eigen::ArrayXd> sigma,
                                                    double lambda_ll, long l_min,
                                                    const Hmm2Options& hmm, int steps = 11,
                                                    double half_width = 0.10, int workers = 1);

struct RtnLevel {
  int level = 1;
  Eigen::ArrayXd f_in, sigma_in;
  std::vector<Segment> segments;
  LevelSeries series;
  SpreadUncertainty spread;
  Eigen::ArrayXd sigma_fc, sigma_fdelta;  // quadrature of first and second kind
  double lambda_ll = 0.0;
  long l_min = 2;
  LambdaSelection lambda_curve;
  LminSelection lmin_curve;
  RateSummary rates;
  long transitions = 0;
  double zero_delta_fraction = 0.0;  // fraction of points with f_delta < 2 sigma
  bool active = false;               // met the continuation criteria
};

struct HierarchyOptions {
  double lambda_ll = 0.0;  // 0 selects automatically (thresholds are negative)
  long l_min = 0;          // 0 selects automatically
  Hmm2Options hmm;
  int n_lambda = 40;
  long pilot_chunk = 256;
  std::vector<long> l_min_candidates = {2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64};
  double l_min_rel_tol = 0.02;
  int spread_steps = 11;
  double spread_half_width = 0.10;
  long min_transitions = 10;
  double zero_fraction = 0.90;
  int max_levels = 8;
  double rate_window_s = 200.0;  // level 1; each deeper level widens by 10x
  double gap_factor = 100.0;
  int workers = 1;
};

// Recursive decomposition: segment, summarize, estimate rates, then feed
// the center series (with its total sigma) to the next level. Stops when
// a level shows too few transitions or a splitting consistent with zero
// for most of the trace. Always returns at least one level.
std::vector<RtnLevel> run_hierarchy(Eigen::Ref<const Eigen::ArrayXd> t_s,
                                    Eigen::Ref<const Eigen::ArrayXd> f,
                                    Eigen::Ref<const Eigen::ArrayXd> sigma,
                                    const HierarchyOptions& options);

// Sum of the last level's centers and every level's signed half-splitting.
Eigen::ArrayXd hierarchy_reconstruction(const std::vector<RtnLevel>& levels);

}  // namespace qfluct
