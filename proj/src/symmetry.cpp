#include "wilson/symmetry.hpp"

#include "wilson/stats.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <set>

namespace wilson {

namespace {

void check_perm(const std::vector<Index>& perm, Index n, const char* who) {
  if (static_cast<Index>(perm.size()) != n)
    raise("invalid-permutation",
          std::string(who) + ": permutation length != " + std::to_string(n));
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (Index p : perm) {
    if (p < 0 || p >= n || seen[static_cast<std::size_t>(p)])
      raise("invalid-permutation",
            std::string(who) + ": not a bijection over 0.." +
                std::to_string(n - 1));
    seen[static_cast<std::size_t>(p)] = true;
  }
}

Matd permute_rows(const Matd& x, const std::vector<Index>& perm) {
  Matd out(x.rows(), x.cols());
  for (Index k = 0; k < x.rows(); ++k)
    out.row(k) = x.row(perm[static_cast<std::size_t>(k)]);
  return out;
}

// Layer-pooled pre-softmax scores over unmasked slots.
std::vector<std::vector<double>> pooled_scores(
    const ModelWeights<double>& w, const std::vector<std::vector<int>>& inputs,
    double offset) {
  std::vector<std::vector<double>> pools(
      static_cast<std::size_t>(w.spec.n_layers));
  ForwardOptions opts;
  opts.rope_phase_offset = offset;
  for (const auto& tokens : inputs) {
    const auto trace = forward<double>(w, tokens, opts);
    const Index t_len = static_cast<Index>(tokens.size());
    for (int l = 0; l < w.spec.n_layers; ++l)
      for (int hh = 0; hh < w.spec.n_heads; ++hh)
        for (Index i = 0; i < t_len; ++i)
          for (Index j = 0; j <= i; ++j)
            pools[static_cast<std::size_t>(l)].push_back(
                trace.scores[static_cast<std::size_t>(l)]
                            [static_cast<std::size_t>(hh)](i, j));
  }
  return pools;
}

double sym_kl_hist(const std::vector<double>& a, const std::vector<double>& b) {
  constexpr int kBins = 32;
  constexpr double kSmooth = 1e-9;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double x : a) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  for (double x : b) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (!(hi > lo)) return 0.0;  // all mass on one point in both samples
  auto histogram = [&](const std::vector<double>& v) {
    std::vector<double> h(kBins, kSmooth);
    for (double x : v) {
      auto idx = static_cast<std::size_t>((x - lo) / (hi - lo) * kBins);
      if (idx >= static_cast<std::size_t>(kBins)) idx = kBins - 1;
      h[idx] += 1.0;
    }
    const double total = static_cast<double>(v.size()) + kBins * kSmooth;
    for (double& p : h) p /= total;
    return h;
  };
  const auto p = histogram(a);
  const auto q = histogram(b);
  double kl_pq = 0, kl_qp = 0;
  for (int k = 0; k < kBins; ++k) {
    kl_pq += p[static_cast<std::size_t>(k)] *
             std::log(p[static_cast<std::size_t>(k)] / q[static_cast<std::size_t>(k)]);
    kl_qp += q[static_cast<std::size_t>(k)] *
             std::log(q[static_cast<std::size_t>(k)] / p[static_cast<std::size_t>(k)]);
  }
  return kl_pq + kl_qp;
}

double max_logit_deviation(const ModelWeights<double>& a,
                           const ModelWeights<double>& b,
                           const std::vector<std::vector<int>>& inputs) {
  double dev = 0;
  for (const auto& tokens : inputs) {
    const Matd la = forward<double>(a, tokens).logits;
    const Matd lb = forward<double>(b, tokens).logits;
    dev = std::max(dev, (la - lb).cwiseAbs().maxCoeff());
  }
  return dev;
}

}  // namespace

PermCheckResult perm_equivariance(const ModelWeights<double>& w,
                                  const std::vector<int>& tokens,
                                  const std::vector<Index>& perm,
                                  MaskKind mask, int layer) {
  if (tokens.empty()) raise("invalid-dimension", "perm check: empty input");
  const Index t_len = static_cast<Index>(tokens.size());
  check_perm(perm, t_len, "perm_equivariance");

  Matd x(t_len, w.spec.d_model);
  for (Index i = 0; i < t_len; ++i) {
    const int tok = tokens[static_cast<std::size_t>(i)];
    if (tok < 0 || tok >= w.spec.vocab)
      raise("invalid-token", "token outside vocabulary");
    x.row(i) = w.embed.row(tok);
  }

  ForwardOptions opts;
  opts.causal = mask == MaskKind::causal;
  const Matd ax = attention_sublayer<double>(w, layer, x, opts).output;
  const Matd apx =
      attention_sublayer<double>(w, layer, permute_rows(x, perm), opts).output;
  const Matd pax = permute_rows(ax, perm);

  PermCheckResult res;
  res.context_len = t_len;
  res.mask = mask;
  res.n_perms = 1;
  const double denom = ax.norm();
  res.epsilon_pi = denom > 0.0 ? (apx - pax).norm() / denom : (apx - pax).norm();
  return res;
}

std::vector<double> default_offset_sweep() {
  return {-0.2, -0.1, -0.05, -0.01, -0.005, 0.0, 0.005, 0.01, 0.05, 0.1, 0.2};
}

RopeDriftCurve rope_drift(const ModelWeights<double>& w,
                          const std::vector<std::vector<int>>& inputs,
                          const std::vector<double>& offsets,
                          DriftDistance distance) {
  if (w.spec.positional_mode != PositionalMode::rope)
    raise("invalid-argument", "rope_drift: model has no rotary positions");
  if (inputs.empty()) raise("insufficient-data", "rope_drift: no inputs");
  if (std::find(offsets.begin(), offsets.end(), 0.0) == offsets.end())
    raise("invalid-argument", "rope_drift: sweep must include offset 0");

  RopeDriftCurve curve;
  curve.offsets = offsets;
  std::sort(curve.offsets.begin(), curve.offsets.end());
  const auto n_off = static_cast<Index>(curve.offsets.size());
  curve.distances = Matd::Zero(w.spec.n_layers, n_off);

  const auto baseline = pooled_scores(w, inputs, 0.0);
  for (Index c = 0; c < n_off; ++c) {
    const auto shifted =
        pooled_scores(w, inputs, curve.offsets[static_cast<std::size_t>(c)]);
    for (int l = 0; l < w.spec.n_layers; ++l) {
      const auto& base_pool = baseline[static_cast<std::size_t>(l)];
      const auto& shift_pool = shifted[static_cast<std::size_t>(l)];
      curve.distances(l, c) =
          distance == DriftDistance::wasserstein1
              ? wasserstein1(base_pool, shift_pool)
              : sym_kl_hist(base_pool, shift_pool);
    }
  }

  // Collapse sign and layer: one mean distance per |offset|.
  std::set<double> mags;
  for (double o : curve.offsets) mags.insert(std::abs(o));
  for (double m : mags) {
    double acc = 0;
    int count = 0;
    for (Index c = 0; c < n_off; ++c) {
      if (std::abs(curve.offsets[static_cast<std::size_t>(c)]) != m) continue;
      for (int l = 0; l < w.spec.n_layers; ++l) {
        acc += curve.distances(l, c);
        ++count;
      }
    }
    curve.magnitudes.push_back(m);
    curve.mean_distance.push_back(acc / static_cast<double>(count));
  }
  curve.area_under_drift = area_up_to(curve, curve.magnitudes.back());
  return curve;
}

double area_up_to(const RopeDriftCurve& curve, double magnitude) {
  double area = 0;
  for (std::size_t k = 0; k + 1 < curve.magnitudes.size(); ++k) {
    if (curve.magnitudes[k + 1] > magnitude + 1e-15) break;
    area += (curve.magnitudes[k + 1] - curve.magnitudes[k]) *
            (curve.mean_distance[k + 1] + curve.mean_distance[k]) / 2.0;
  }
  return area;
}

double mlp_perm_check(const ModelWeights<double>& w,
                      const std::vector<std::vector<int>>& inputs,
                      const std::vector<Index>& perm, bool compensate) {
  check_perm(perm, w.spec.d_ff, "mlp_perm_check");
  ModelWeights<double> permuted = w;
  for (auto& lw : permuted.layers) {
    Matd w1(lw.w1.rows(), lw.w1.cols());
    Matd w2(lw.w2.rows(), lw.w2.cols());
    for (Index k = 0; k < w.spec.d_ff; ++k) {
      w1.col(k) = lw.w1.col(perm[static_cast<std::size_t>(k)]);
      w2.row(k) = lw.w2.row(perm[static_cast<std::size_t>(k)]);
    }
    lw.w1 = std::move(w1);
    if (compensate) lw.w2 = std::move(w2);
  }
  return max_logit_deviation(w, permuted, inputs);
}

double head_mix_check(const ModelWeights<double>& w,
                      const std::vector<std::vector<int>>& inputs,
                      const std::vector<Matd>& mixes, bool also_mix_qk) {
  const int dh = w.spec.d_head();
  if (static_cast<int>(mixes.size()) != w.spec.n_heads)
    raise("invalid-dimension", "head_mix_check: one mix per head required");
  std::vector<Matd> inverses;
  for (const Matd& g : mixes) {
    if (g.rows() != dh || g.cols() != dh)
      raise("invalid-dimension", "head_mix_check: mix must be d_head x d_head");
    Eigen::FullPivLU<Matd> lu(g);
    if (!lu.isInvertible())
      raise("invalid-mix", "head mixing map is singular");
    inverses.push_back(lu.inverse());
  }

  ModelWeights<double> mixed = w;
  for (auto& lw : mixed.layers) {
    for (int hh = 0; hh < w.spec.n_heads; ++hh) {
      const auto& g = mixes[static_cast<std::size_t>(hh)];
      lw.w_v.middleCols(hh * dh, dh) = lw.w_v.middleCols(hh * dh, dh) * g;
      lw.w_o.middleRows(hh * dh, dh) =
          inverses[static_cast<std::size_t>(hh)] * lw.w_o.middleRows(hh * dh, dh);
      if (also_mix_qk) {
        lw.w_q.middleCols(hh * dh, dh) = lw.w_q.middleCols(hh * dh, dh) * g;
        lw.w_k.middleCols(hh * dh, dh) = lw.w_k.middleCols(hh * dh, dh) * g;
      }
    }
  }
  return max_logit_deviation(w, mixed, inputs);
}

}  // namespace wilson
