#pragma once

// Loop curvature over attention edges.
//
// A loop sits on an attention edge (i <- j) at layer l and compares the two
// transports around the square: move across the edge then up through position
// i's layer map, versus up through position j's layer map then across the
// edge at layer l+1. The score
//
//   kappa = sqrt( (1/r) sum_s || T_i^layer (T^attn_l v_s)
//                             - T^attn_{l+1} (T_j^layer v_s) ||^2 )
//
// is a probe estimate of the Frobenius norm of the path discrepancy, built
// from four JVPs per probe and never from an assembled or inverted matrix.
//
// The cheap scan pass screens edges with the frozen-softmax surrogate (layer
// maps treated as identity, attention transports exact d x d matrices), and
// only edges above a score quantile graduate to the probe-level estimate.

#include "wilson/model.hpp"
#include "wilson/numerics.hpp"
#include "wilson/transports.hpp"

#include <functional>
#include <string>
#include <vector>

namespace wilson {

struct LoopSpec {
  Index i = 0;    // target position
  Index j = 0;    // source position, j <= i under the causal mask
  int layer = 0;  // lower edge sits at `layer`, upper edge at `layer + 1`
};

enum class ScoreMode { scan, confirmed };

struct LoopScore {
  LoopSpec loop;
  double kappa = 0;
  int probes_used = 0;  // 0 for scan scores
  ScoreMode mode = ScoreMode::scan;
  std::string input_id;
};

struct SamplingKnobs {
  int probes = 6;     // r: probes per confirmed loop
  int targets = 8;    // k: target positions sampled per layer
  int neighbors = 6;  // m: high-attention sources kept per target
  double explore_fraction = 0.2;  // extra uniform sources, as a fraction of m
  double scan_quantile = 0.95;    // scan scores above this graduate
  ProbeKind probe_kind = ProbeKind::rademacher;
};

// The four matrix-free transports around one loop.
struct TransportOps {
  std::function<Vecd(const Vecd&)> attn_lower;    // T^attn_{i<-j, l}
  std::function<Vecd(const Vecd&)> layer_target;  // T^layer_{i, l}
  std::function<Vecd(const Vecd&)> layer_source;  // T^layer_{j, l}
  std::function<Vecd(const Vecd&)> attn_upper;    // T^attn_{i<-j, l+1}
};

// Probe estimate of the loop discrepancy norm; 4 transport applications per
// probe, 4r total.
double kappa_probe_estimate(const TransportOps& ops, Index d, int r,
                            SeededRng& rng,
                            ProbeKind kind = ProbeKind::rademacher);

// Wires the JVPs of a traced forward pass into kappa_probe_estimate.
double kappa_inv_estimate(const ModelWeights<double>& w,
                          const ActivationTrace<double>& trace,
                          const LoopSpec& loop, int r, SeededRng& rng,
                          ProbeKind kind = ProbeKind::rademacher);

// Dense reference: assembles all four transports column-by-column and takes
// the exact Frobenius norm of the path difference. Only viable for small
// d_model; tests and envelope checks use it, production scoring never does.
double kappa_exact(const ModelWeights<double>& w,
                   const ActivationTrace<double>& trace, const LoopSpec& loop);

struct SelectedLoops {
  std::vector<LoopSpec> loops;
  std::vector<std::string> warnings;  // knob clamps, short layers, ...
};

// Attention-weighted loop sampling: per layer, k shuffled target positions;
// per target, the top-m sources by head-averaged attention weight (ties to
// the lowest source index) plus ceil(explore_fraction * m) uniform sources.
SelectedLoops select_loops(const ActivationTrace<double>& trace,
                           const SamplingKnobs& knobs, SeededRng& rng);

struct ScanConfirmResult {
  std::vector<LoopScore> scan;       // one per input loop, in input order
  std::vector<LoopScore> confirmed;  // the graduating subset, probe-scored
  double scan_seconds = 0;
  double confirm_seconds = 0;
};

// Scan every loop with the frozen surrogate (exact Frobenius on the d x d
// difference of the two edge transports), then confirm the loops whose scan
// score has empirical CDF above scan_quantile. Confirmation draws from the
// child stream keyed by the loop's index in `loops`, so results are
// identical for any worker count and unaffected by which other loops
// graduate.
ScanConfirmResult scan_then_confirm(const ModelWeights<double>& w,
                                    const ActivationTrace<double>& trace,
                                    const std::vector<LoopSpec>& loops,
                                    const SamplingKnobs& knobs,
                                    const SeededRng& rng,
                                    const std::string& input_id,
                                    int workers = 1);

struct KappaAggregate {
  double kappa_max = 0;
  double kappa_p95 = 0;
  Index n_loops = 0;
  Index n_confirmed = 0;
};

// Collapses scan + confirmed scores to one value per (input, loop) — a
// confirmed score supersedes the scan score for the same loop — and reports
// max and the 0.95 linear-interpolation quantile.
KappaAggregate aggregate_kappa(const std::vector<LoopScore>& scan,
                               const std::vector<LoopScore>& confirmed);

}  // namespace wilson
