#pragma once

// Gauge fixing for cross-seed comparability of logged activations: whiten
// per run, then rotate onto a reference run with orthogonal Procrustes.
// Curvature scoring never consumes these outputs — the gauge exists for
// logging and cross-seed statistics only.

#include "wilson/numerics.hpp"

#include <vector>

namespace wilson {

struct GaugeMap {
  Vecd mean;      // column means removed before whitening
  Matd whitener;  // symmetric d x d
  Matd rotation;  // orthogonal d x d, alignment onto the reference run
};

struct WhitenResult {
  Matd whitened;  // N x d, zero column means, identity covariance
  Vecd mean;
  Matd whitener;
};

// Center, estimate covariance with 1/max(1, N-1), clamp eigenvalues at 1e-5
// (rank deficiency must not blow up the inverse square root), and map
// through Q D^{-1/2} Q^T.
WhitenResult whiten(const Matd& h);

// R = U V^T from the SVD of h2^T h1, the minimizer of ||h1 - h2 R||_F over
// orthogonal R.
Matd procrustes_align(const Matd& h1, const Matd& h2);

// Whiten `h` and align it onto an already-whitened reference.
GaugeMap fit_gauge(const Matd& reference_whitened, const Matd& h);

// ((rows - mean) * whitener) * rotation.
Matd apply_gauge(const GaugeMap& map, const Matd& h);

struct GaugeStats {
  int layer = 0;
  int seed = 0;
  double kendall_tau = 0;  // saliency-rank agreement with the reference seed
  double probe_var = 0;    // cross-seed probe-accuracy variance (shared)
  double cosine_dist = 0;  // 1 - cos(mean vector, reference mean vector)
};

struct GaugeStabilityReport {
  std::vector<GaugeStats> pre;   // raw activations, one row per seed
  std::vector<GaugeStats> post;  // gauge-fixed activations
  double probe_var_pre = 0;
  double probe_var_post = 0;
  double variance_ratio = 0;  // post / pre; 0 when both variances vanish
};

// Cross-seed stability of one layer's features. `runs[s]` holds seed s's
// N x d feature matrix over identical inputs; `labels` is the fixed binary
// probe task. Reported per seed, against runs[0] as the reference:
//   - probe accuracy variance across seeds (probe = least-squares classifier
//     on the first min(8, d) dimensions plus bias; the capacity restriction
//     is load-bearing, a full-rank linear probe would be invariant under any
//     invertible map and the comparison would measure nothing),
//   - Kendall tau-b between per-dimension mean-|activation| saliencies,
//   - cosine distance between mean vectors (post side maps means through
//     the linear gauge part only; centering would zero every mean).
GaugeStabilityReport gauge_stability_report(const std::vector<Matd>& runs,
                                            const std::vector<int>& labels,
                                            int layer,
                                            std::vector<int> seed_ids = {});

// The probe itself, exposed for tests: resubstitution accuracy of the
// capacity-restricted least-squares classifier.
double slice_probe_accuracy(const Matd& features, const std::vector<int>& labels);

}  // namespace wilson
