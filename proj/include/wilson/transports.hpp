#pragma once

// Forward-mode transport maps between residual-stream fibers.
//
// Vertical transport: d h_{i,l+1} / d h_{i,l} (one position, through one
// block, other positions held fixed). Horizontal transport: d attn_out_i /
// d h_{j,l} through the attention sublayer alone — the residual identity is
// deliberately excluded even at i == j, since the vertical map owns it.
//
// Tangents are propagated analytically (dual value/tangent pairs through
// LayerNorm, rotary rotation, softmax, GELU). No numeric differentiation
// happens here; finite differences exist only as a test oracle.

#include "wilson/model.hpp"
#include "wilson/numerics.hpp"

#include <vector>

namespace wilson {

// d LN(x) in direction dx at base point x. The additive offset drops out.
template <class S>
Vec<S> layernorm_row_jvp(const Vec<S>& x, const Vec<S>& dx,
                         const Vec<S>& scale) {
  const Index d = x.size();
  const S mu = x.mean();
  const Vec<S> c = x.array() - mu;
  const S var = c.squaredNorm() / static_cast<S>(d);
  const S sd = std::sqrt(var + static_cast<S>(kLayerNormEps));
  const S dmu = dx.mean();
  const Vec<S> dc = dx.array() - dmu;
  const S dvar = S(2) * c.dot(dc) / static_cast<S>(d);
  const S dsd = dvar / (S(2) * sd);
  return scale.array() * (dc.array() / sd - c.array() * dsd / (sd * sd));
}

// d softmax over positions [0, lim) given the attention row and the score
// tangent: dalpha_m = alpha_m * (ds_m - sum_k alpha_k ds_k).
template <class S>
Vec<S> softmax_row_jvp(const Vec<S>& alpha_row, const Vec<S>& ds, Index lim) {
  Vec<S> dalpha = Vec<S>::Zero(alpha_row.size());
  S dot = 0;
  for (Index m = 0; m < lim; ++m) dot += alpha_row[m] * ds[m];
  for (Index m = 0; m < lim; ++m) dalpha[m] = alpha_row[m] * (ds[m] - dot);
  return dalpha;
}

namespace detail {

// Shared primal recomputation for one layer's attention: post-LN rows and
// rotated q/k plus raw v. Attention patterns themselves are read from the
// trace so that tests may pin or perturb the linearization point.
template <class S>
struct AttnPrimal {
  Mat<S> x;  // post-LN residuals
  Mat<S> q;  // rotated
  Mat<S> k;  // rotated
  Mat<S> v;
};

template <class S>
AttnPrimal<S> attn_primal(const ModelWeights<S>& w, int layer, const Mat<S>& h,
                          const ForwardOptions& opts) {
  const ModelSpec& spec = w.spec;
  const LayerWeights<S>& lw = w.layers[layer];
  AttnPrimal<S> p;
  p.x = layernorm_rows(h, lw.ln1_scale, lw.ln1_offset);
  p.q = p.x * lw.w_q;
  p.k = p.x * lw.w_k;
  p.v = p.x * lw.w_v;
  if (spec.positional_mode == PositionalMode::rope) {
    const int dh = spec.d_head();
    for (Index i = 0; i < h.rows(); ++i) {
      for (int hh = 0; hh < spec.n_heads; ++hh) {
        Vec<S> qrow = p.q.row(i).segment(hh * dh, dh);
        Vec<S> krow = p.k.row(i).segment(hh * dh, dh);
        rope_rotate_row(spec, i, qrow.data(), opts.rope_phase_offset);
        rope_rotate_row(spec, i, krow.data(), 0.0);
        p.q.row(i).segment(hh * dh, dh) = qrow;
        p.k.row(i).segment(hh * dh, dh) = krow;
      }
    }
  }
  return p;
}

template <class S>
void check_loop_position(const ActivationTrace<S>& trace, Index pos,
                         const char* name) {
  if (pos < 0 || pos >= trace.h[0].rows())
    raise("invalid-argument",
          std::string(name) + " position out of range in transport request");
}

}  // namespace detail

// Tangent of attn_out_i under a perturbation of the pre-LN residual h_{j,l}.
// `full` differentiates the value path and the softmax sensitivity (scores
// move through k_j, and through q_i when i == j). `frozen_alpha` is the
// linearization the scan surrogate realizes: attention weights pinned, value
// path only, and the tangent is taken at the *post-LN* sublayer input, so it
// matches frozen_attn_transport(i,j,l) * v by construction.
enum class HorizontalMode { full, frozen_alpha };

template <class S>
Vec<S> jvp_horizontal(const ModelWeights<S>& w, const ActivationTrace<S>& trace,
                      Index i, Index j, int layer, const Vec<S>& v,
                      HorizontalMode mode = HorizontalMode::full,
                      const ForwardOptions& opts = {}) {
  const ModelSpec& spec = w.spec;
  if (layer < 0 || layer >= spec.n_layers)
    raise("invalid-argument", "jvp_horizontal: layer out of range");
  detail::check_loop_position(trace, i, "target");
  detail::check_loop_position(trace, j, "source");
  if (opts.causal && j > i)
    raise("masked-edge", "attention edge (" + std::to_string(i) + " <- " +
                             std::to_string(j) + ") is causally masked");
  if (v.size() != spec.d_model)
    raise("invalid-dimension", "tangent width != d_model");

  const LayerWeights<S>& lw = w.layers[layer];
  const Mat<S>& h = trace.h[layer];
  const Index t_len = h.rows();
  const int dh = spec.d_head();
  const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dh));

  Vec<S> dctx = Vec<S>::Zero(spec.d_model);

  if (mode == HorizontalMode::frozen_alpha) {
    // Value path with pinned attention, tangent at the post-LN input.
    const Vec<S> dv = lw.w_v.transpose() * v;
    for (int hh = 0; hh < spec.n_heads; ++hh) {
      const S a = trace.alpha[layer][hh](i, j);
      dctx.segment(hh * dh, dh) = a * dv.segment(hh * dh, dh);
    }
    return lw.w_o.transpose() * dctx;
  }

  const auto p = detail::attn_primal(w, layer, h, opts);
  const Vec<S> dx = layernorm_row_jvp<S>(h.row(j), v, lw.ln1_scale);
  Vec<S> dq = lw.w_q.transpose() * dx;
  Vec<S> dk = lw.w_k.transpose() * dx;
  const Vec<S> dv = lw.w_v.transpose() * dx;
  if (spec.positional_mode == PositionalMode::rope) {
    for (int hh = 0; hh < spec.n_heads; ++hh) {
      rope_rotate_row(spec, j, dq.data() + hh * dh, opts.rope_phase_offset);
      rope_rotate_row(spec, j, dk.data() + hh * dh, 0.0);
    }
  }

  const Index lim = opts.causal ? i + 1 : t_len;
  for (int hh = 0; hh < spec.n_heads; ++hh) {
    const auto qh = p.q.middleCols(hh * dh, dh);
    const auto kh = p.k.middleCols(hh * dh, dh);
    const auto vh = p.v.middleCols(hh * dh, dh);
    const Vec<S>& alpha_row = trace.alpha[layer][hh].row(i);

    // Score tangent for row i: k_j moves always; q_i moves only when j == i.
    Vec<S> ds = Vec<S>::Zero(t_len);
    const auto dkh = dk.segment(hh * dh, dh);
    if (j < lim) ds[j] += qh.row(i).dot(dkh) * inv_sqrt;
    if (j == i) {
      const auto dqh = dq.segment(hh * dh, dh);
      for (Index m = 0; m < lim; ++m) ds[m] += kh.row(m).dot(dqh) * inv_sqrt;
    }

    const Vec<S> dalpha = softmax_row_jvp<S>(alpha_row, ds, lim);
    Vec<S> acc = Vec<S>::Zero(dh);
    for (Index m = 0; m < lim; ++m)
      if (dalpha[m] != S(0)) acc += dalpha[m] * vh.row(m).transpose();
    acc += alpha_row[j] * dv.segment(hh * dh, dh);
    dctx.segment(hh * dh, dh) = acc;
  }
  return lw.w_o.transpose() * dctx;
}

// Tangent of h_{i,l+1} under a perturbation of h_{i,l}, other positions held
// fixed: residual identity + attention sublayer (q_i, k_i, v_i all move) +
// MLP sublayer at the perturbed mid-state.
template <class S>
Vec<S> jvp_vertical(const ModelWeights<S>& w, const ActivationTrace<S>& trace,
                    Index i, int layer, const Vec<S>& v,
                    const ForwardOptions& opts = {}) {
  const ModelSpec& spec = w.spec;
  if (layer < 0 || layer >= spec.n_layers)
    raise("invalid-argument", "jvp_vertical: layer out of range");
  detail::check_loop_position(trace, i, "target");
  if (v.size() != spec.d_model)
    raise("invalid-dimension", "tangent width != d_model");

  const LayerWeights<S>& lw = w.layers[layer];
  const Mat<S>& h = trace.h[layer];
  const Index t_len = h.rows();
  const int dh = spec.d_head();
  const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dh));
  const auto p = detail::attn_primal(w, layer, h, opts);

  const Vec<S> dx = layernorm_row_jvp<S>(h.row(i), v, lw.ln1_scale);
  Vec<S> dq = lw.w_q.transpose() * dx;
  Vec<S> dk = lw.w_k.transpose() * dx;
  const Vec<S> dv = lw.w_v.transpose() * dx;
  if (spec.positional_mode == PositionalMode::rope) {
    for (int hh = 0; hh < spec.n_heads; ++hh) {
      rope_rotate_row(spec, i, dq.data() + hh * dh, opts.rope_phase_offset);
      rope_rotate_row(spec, i, dk.data() + hh * dh, 0.0);
    }
  }

  const Index lim = opts.causal ? i + 1 : t_len;
  Vec<S> dctx = Vec<S>::Zero(spec.d_model);
  Vec<S> ctx = Vec<S>::Zero(spec.d_model);
  for (int hh = 0; hh < spec.n_heads; ++hh) {
    const auto qh = p.q.middleCols(hh * dh, dh);
    const auto kh = p.k.middleCols(hh * dh, dh);
    const auto vh = p.v.middleCols(hh * dh, dh);
    const Vec<S>& alpha_row = trace.alpha[layer][hh].row(i);

    Vec<S> ds = Vec<S>::Zero(t_len);
    const auto dqh = dq.segment(hh * dh, dh);
    const auto dkh = dk.segment(hh * dh, dh);
    for (Index m = 0; m < lim; ++m) ds[m] = kh.row(m).dot(dqh) * inv_sqrt;
    if (i < lim) ds[i] += qh.row(i).dot(dkh) * inv_sqrt;

    const Vec<S> dalpha = softmax_row_jvp<S>(alpha_row, ds, lim);
    Vec<S> acc = Vec<S>::Zero(dh);
    Vec<S> ctx_acc = Vec<S>::Zero(dh);
    for (Index m = 0; m < lim; ++m) {
      if (dalpha[m] != S(0)) acc += dalpha[m] * vh.row(m).transpose();
      ctx_acc += alpha_row[m] * vh.row(m).transpose();
    }
    acc += alpha_row[i] * dv.segment(hh * dh, dh);
    dctx.segment(hh * dh, dh) = acc;
    ctx.segment(hh * dh, dh) = ctx_acc;
  }

  const Vec<S> dattn = lw.w_o.transpose() * dctx;
  const Vec<S> attn_out = lw.w_o.transpose() * ctx;
  const Vec<S> mid = Vec<S>(h.row(i)) + attn_out;
  const Vec<S> dmid = v + dattn;

  const Vec<S> dy = layernorm_row_jvp<S>(mid, dmid, lw.ln2_scale);
  // Primal hidden pre-activation is needed for the GELU slope.
  Mat<S> mid_row(1, spec.d_model);
  mid_row.row(0) = mid;
  const Mat<S> y = layernorm_rows(mid_row, lw.ln2_scale, lw.ln2_offset);
  const Vec<S> hidden = lw.w1.transpose() * Vec<S>(y.row(0));
  Vec<S> dhidden = lw.w1.transpose() * dy;
  for (Index m = 0; m < dhidden.size(); ++m)
    dhidden[m] *= gelu_tanh_grad(hidden[m]);
  return dmid + lw.w2.transpose() * dhidden;
}

// Per-head value->output maps, each d x d in Jacobian orientation (acting on
// column tangents: M[a][b] = d out_a / d x_b through head h's value path).
// They depend only on the layer weights, so scan callers hoist them.
template <class S>
std::vector<Mat<S>> head_value_maps(const ModelWeights<S>& w, int layer) {
  if (layer < 0 || layer >= w.spec.n_layers)
    raise("invalid-argument", "head_value_maps: layer out of range");
  const int dh = w.spec.d_head();
  const LayerWeights<S>& lw = w.layers[layer];
  std::vector<Mat<S>> maps;
  maps.reserve(w.spec.n_heads);
  for (int hh = 0; hh < w.spec.n_heads; ++hh)
    maps.push_back(lw.w_o.middleRows(hh * dh, dh).transpose() *
                   lw.w_v.middleCols(hh * dh, dh).transpose());
  return maps;
}

// Frozen-softmax surrogate for the horizontal transport: sum_h alpha_h(i,j)
// * M_h, a d x d linear map on the post-LN sublayer input.
template <class S>
Mat<S> frozen_attn_transport_from_maps(const std::vector<Mat<S>>& maps,
                                       const std::vector<Mat<S>>& alpha_layer,
                                       Index i, Index j) {
  const Index d = maps.empty() ? 0 : maps[0].rows();
  Mat<S> t = Mat<S>::Zero(d, d);
  for (std::size_t hh = 0; hh < maps.size(); ++hh)
    t += alpha_layer[hh](i, j) * maps[hh];
  return t;
}

template <class S>
Mat<S> frozen_attn_transport(const ModelWeights<S>& w,
                             const ActivationTrace<S>& trace, Index i, Index j,
                             int layer, bool causal = true) {
  if (layer < 0 || layer >= w.spec.n_layers)
    raise("invalid-argument", "frozen_attn_transport: layer out of range");
  detail::check_loop_position(trace, i, "target");
  detail::check_loop_position(trace, j, "source");
  if (causal && j > i)
    raise("masked-edge", "attention edge (" + std::to_string(i) + " <- " +
                             std::to_string(j) + ") is causally masked");
  return frozen_attn_transport_from_maps<S>(head_value_maps(w, layer),
                                            trace.alpha[layer], i, j);
}

}  // namespace wilson
