#pragma once

// Symmetry diagnostics: permutation equivariance of attention, phase drift
// under rotary offsets, and the exact parameter symmetries (MLP hidden-unit
// permutation, head mixing absorbed into the output projection).

#include "wilson/model.hpp"
#include "wilson/numerics.hpp"

#include <vector>

namespace wilson {

enum class MaskKind { none, causal };

struct PermCheckResult {
  double epsilon_pi = 0;  // ||Attn(PX) - P Attn(X)||_F / ||Attn(X)||_F
  Index context_len = 0;
  MaskKind mask = MaskKind::none;
  int n_perms = 1;
};

// Equivariance of one attention sublayer under a row permutation of its
// input. With no positional signal and no mask this is an identity of the
// architecture; the mask (or rotary phases) breaks it by a measurable margin.
PermCheckResult perm_equivariance(const ModelWeights<double>& w,
                                  const std::vector<int>& tokens,
                                  const std::vector<Index>& perm,
                                  MaskKind mask, int layer = 0);

enum class DriftDistance { wasserstein1, sym_kl };

struct RopeDriftCurve {
  std::vector<double> offsets;        // sweep points, ascending, includes 0
  Matd distances;                     // n_layers x n_offsets
  std::vector<double> magnitudes;     // sorted unique |offset|
  std::vector<double> mean_distance;  // averaged over layers and signs
  double area_under_drift = 0;        // trapezoid of mean_distance over magnitude
};

// {0, +/-0.005, +/-0.01, +/-0.05, +/-0.1, +/-0.2} radians.
std::vector<double> default_offset_sweep();

// Distribution shift of pre-softmax attention scores under a query-phase
// offset. Scores are pooled over heads, unmasked positions, and inputs, per
// layer; pre-softmax retains the scale information softmax would discard.
RopeDriftCurve rope_drift(const ModelWeights<double>& w,
                          const std::vector<std::vector<int>>& inputs,
                          const std::vector<double>& offsets,
                          DriftDistance distance = DriftDistance::wasserstein1);

// Cumulative trapezoid of the curve up to the given |offset|.
double area_up_to(const RopeDriftCurve& curve, double magnitude);

// Max |logit| deviation of the full model after permuting every layer's MLP
// hidden units. Compensated (w1 columns and w2 rows permuted together) the
// network is identical; uncompensated it is not, which is the negative
// control distinguishing a real check from a vacuous one.
double mlp_perm_check(const ModelWeights<double>& w,
                      const std::vector<std::vector<int>>& inputs,
                      const std::vector<Index>& perm, bool compensate = true);

// Max |logit| deviation after mixing each head's value block by G_h and
// compensating the output projection by G_h^{-1}. Exact for value-path
// mixing; `also_mix_qk` extends the mix to the score path, where absorption
// is only approximate, as a recorded negative control.
double head_mix_check(const ModelWeights<double>& w,
                      const std::vector<std::vector<int>>& inputs,
                      const std::vector<Matd>& mixes, bool also_mix_qk = false);

}  // namespace wilson
