#pragma once

// Scoring, calibration, rank-correlation, and resampling statistics.
//
// Degenerate inputs follow one convention throughout: impossible requests
// (empty data, size mismatches, single-class labels where a discriminative
// metric is asked for) raise Error; merely undefined statistics (zero
// variance in a correlation) return NaN with the `degenerate` flag set so
// callers can log and move on.

#include "wilson/numerics.hpp"

#include <functional>
#include <vector>

namespace wilson {

struct RocPoint {
  double fpr = 0, tpr = 0;
};

struct PrPoint {
  double recall = 0, precision = 0;
};

struct BinaryMetrics {
  double auc = 0;
  double ap = 0;
  std::vector<RocPoint> roc;  // threshold sweep, starts (0,0), ends (1,1)
  std::vector<PrPoint> pr;
};

// ROC AUC by trapezoid over the unique-threshold sweep (tied scores move as
// one block, which is exactly the mid-rank / Mann-Whitney convention) and
// average precision as precision-weighted recall increments.
BinaryMetrics roc_auc_ap(const std::vector<double>& scores,
                         const std::vector<int>& labels);

struct CalibrationBin {
  double conf = 0;       // mean normalized score in bin
  double acc = 0;        // mean label in bin
  double wilson_lo = 0;  // Wilson score interval for acc at z = 1.96
  double wilson_hi = 0;
  int count = 0;
};

struct CalibrationReport {
  double brier = 0;
  double ece = 0;
  std::vector<CalibrationBin> bins;
  // Raw scores are min-max normalized into [0,1] before binning; the range
  // used is recorded here because unbounded curvature scores make "confidence"
  // meaningful only after this (documented) squashing.
  bool normalized = false;
  double norm_min = 0, norm_max = 0;
};

CalibrationReport calibration(const std::vector<double>& scores,
                              const std::vector<int>& labels, int n_bins = 10);

struct RankStats {
  double spearman = 0;
  double pearson = 0;
  double kendall_tau_b = 0;
  double theil_sen = 0;
  bool degenerate = false;  // some component is NaN due to zero variance
};

RankStats rank_stats(const std::vector<double>& x,
                     const std::vector<double>& y);

double pearson(const std::vector<double>& x, const std::vector<double>& y);
double spearman(const std::vector<double>& x, const std::vector<double>& y);
// O(n log n) Knight construction; the O(n^2) pairwise count lives in tests.
double kendall_tau_b(const std::vector<double>& x,
                     const std::vector<double>& y);
// Exact median of all pairwise slopes (pairs with equal x skipped).
double theil_sen(const std::vector<double>& x, const std::vector<double>& y);

std::vector<double> mid_ranks(const std::vector<double>& v);

// Wasserstein-1 between empirical distributions. Equal sizes reduce to the
// mean |sorted difference|; unequal sizes integrate the quantile gap.
double wasserstein1(std::vector<double> a, std::vector<double> b);

struct BootstrapConfig {
  int resamples = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
};

struct BootstrapCi {
  double point = 0;
  double lo = 0, hi = 0;
  int resamples = 0;
};

// Percentile bootstrap over index resamples. `strata` (empty = one stratum)
// fixes per-stratum counts in every replicate. Replicate r draws only from
// child stream r of the seed, so results are reproducible and independent of
// any parallel schedule.
BootstrapCi bootstrap_ci(
    const std::function<double(const std::vector<Index>&)>& statistic,
    Index n, const std::vector<int>& strata, const BootstrapConfig& cfg);

}  // namespace wilson
