#include "wilson/commutator.hpp"

#include "wilson/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wilson {

namespace {

// Single-head attention contribution: the head's context rows pushed through
// its slice of w_o. Summing this over all heads reproduces the full
// attention sublayer output.
Matd head_context_output(const ModelWeights<double>& w, int layer, int head,
                         const Matd& h) {
  const ModelSpec& spec = w.spec;
  const LayerWeights<double>& lw = w.layers[layer];
  const Index t_len = h.rows();
  const int dh = spec.d_head();

  const Matd x = layernorm_rows<double>(h, lw.ln1_scale, lw.ln1_offset);
  Matd q = x * lw.w_q.middleCols(head * dh, dh);
  Matd k = x * lw.w_k.middleCols(head * dh, dh);
  const Matd v = x * lw.w_v.middleCols(head * dh, dh);

  if (spec.positional_mode == PositionalMode::rope) {
    for (Index i = 0; i < t_len; ++i) {
      Vecd qrow = q.row(i);
      Vecd krow = k.row(i);
      rope_rotate_row(spec, i, qrow.data(), 0.0);
      rope_rotate_row(spec, i, krow.data(), 0.0);
      q.row(i) = qrow;
      k.row(i) = krow;
    }
  }

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const double neg_inf = -std::numeric_limits<double>::infinity();
  Matd sc = q * k.transpose() * inv_sqrt;
  for (Index i = 0; i < t_len; ++i)
    for (Index j = i + 1; j < t_len; ++j) sc(i, j) = neg_inf;
  Matd alpha(t_len, t_len);
  for (Index i = 0; i < t_len; ++i) {
    const double mx = sc.row(i).head(i + 1).maxCoeff();
    double denom = 0;
    for (Index j = 0; j <= i; ++j) {
      alpha(i, j) = std::exp(sc(i, j) - mx);
      denom += alpha(i, j);
    }
    for (Index j = 0; j <= i; ++j) alpha(i, j) /= denom;
    for (Index j = i + 1; j < t_len; ++j) alpha(i, j) = 0.0;
  }
  return alpha * v * lw.w_o.middleRows(head * dh, dh);
}

void check_layer(const ModelWeights<double>& w, int layer, const char* who) {
  if (layer < 0 || layer >= w.spec.n_layers)
    raise("invalid-argument", std::string(who) + ": layer out of range");
}

// Finish the forward pass from a residual state entering `start_layer`.
Vecd logits_from(const ModelWeights<double>& w, Matd h, int start_layer) {
  for (int l = start_layer; l < w.spec.n_layers; ++l) {
    const Matd mid = h + attention_sublayer<double>(w, l, h).output;
    h = mid + mlp_sublayer<double>(w, l, mid);
  }
  const Matd logits = h * w.unembed;
  if (!logits.allFinite())
    raise("numeric-overflow", "reorder produced non-finite logits");
  return logits.row(logits.rows() - 1);
}

}  // namespace

Submodule make_attention_sublayer(const ModelWeights<double>& w, int layer) {
  check_layer(w, layer, "make_attention_sublayer");
  Submodule s;
  s.id = "layer" + std::to_string(layer) + ".attn";
  s.kind = SubmoduleKind::attention_sublayer;
  s.layer = layer;
  s.apply = [&w, layer](const Matd& h) {
    return Matd(h + attention_sublayer<double>(w, layer, h).output);
  };
  return s;
}

Submodule make_mlp_sublayer(const ModelWeights<double>& w, int layer) {
  check_layer(w, layer, "make_mlp_sublayer");
  Submodule s;
  s.id = "layer" + std::to_string(layer) + ".mlp";
  s.kind = SubmoduleKind::mlp_sublayer;
  s.layer = layer;
  s.apply = [&w, layer](const Matd& h) {
    return Matd(h + mlp_sublayer<double>(w, layer, h));
  };
  return s;
}

Submodule make_attention_head(const ModelWeights<double>& w, int layer,
                              int head) {
  check_layer(w, layer, "make_attention_head");
  if (head < 0 || head >= w.spec.n_heads)
    raise("invalid-argument", "make_attention_head: head out of range");
  Submodule s;
  s.id = "layer" + std::to_string(layer) + ".head" + std::to_string(head);
  s.kind = SubmoduleKind::attention_head;
  s.layer = layer;
  s.head = head;
  s.apply = [&w, layer, head](const Matd& h) {
    return Matd(h + head_context_output(w, layer, head, h));
  };
  return s;
}

double commutator_norm(const Submodule& a, const Submodule& b,
                       const ResidualBatch& batch) {
  if (batch.empty())
    raise("insufficient-data", "commutator_norm: empty calibration batch");
  double acc = 0;
  for (const Matd& x : batch) {
    const Matd bx = b.apply(x);
    if (bx.rows() != x.rows() || bx.cols() != x.cols())
      raise("incompatible-submodules",
            b.id + " changed the residual shape");
    const Matd ab = a.apply(bx);
    const Matd ax = a.apply(x);
    if (ax.rows() != x.rows() || ax.cols() != x.cols())
      raise("incompatible-submodules",
            a.id + " changed the residual shape");
    const Matd ba = b.apply(ax);
    acc += (ab - ba).squaredNorm();
  }
  return std::sqrt(acc);
}

CommutatorMap commutator_map(const std::vector<Submodule>& modules,
                             const ResidualBatch& batch,
                             const std::string& batch_id) {
  const auto n = static_cast<Index>(modules.size());
  CommutatorMap map;
  map.delta = Matd::Zero(n, n);
  for (const Submodule& m : modules) map.ids.push_back(m.id);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double d = commutator_norm(modules[static_cast<std::size_t>(i)],
                                       modules[static_cast<std::size_t>(j)],
                                       batch);
      map.delta(i, j) = d;
      map.delta(j, i) = d;
      CommutatorRecord rec;
      rec.module_a = std::min(map.ids[static_cast<std::size_t>(i)],
                              map.ids[static_cast<std::size_t>(j)]);
      rec.module_b = std::max(map.ids[static_cast<std::size_t>(i)],
                              map.ids[static_cast<std::size_t>(j)]);
      rec.delta_fro = d;
      rec.batch_id = batch_id;
      map.records.push_back(std::move(rec));
    }
  }
  return map;
}

double reorder_drift(const ModelWeights<double>& w,
                     const std::vector<int>& tokens, const Submodule& a,
                     const Submodule& b) {
  if (a.layer != b.layer)
    raise("unsupported-intervention",
          "reorder across blocks is not a plausible schedule: " + a.id +
              " vs " + b.id);
  if (a.kind == SubmoduleKind::attention_head ||
      b.kind == SubmoduleKind::attention_head)
    raise("unsupported-intervention",
          "reorder is defined for whole sublayers, not single heads");
  const auto trace = forward<double>(w, tokens);
  const Matd& entry = trace.h[static_cast<std::size_t>(a.layer)];
  const Vecd y_ab = logits_from(w, b.apply(a.apply(entry)), a.layer + 1);
  const Vecd y_ba = logits_from(w, a.apply(b.apply(entry)), a.layer + 1);
  return (y_ab - y_ba).norm();
}

DriftCorrelation delta_drift_correlation(
    const std::vector<CommutatorRecord>& records) {
  std::vector<double> delta, drift;
  for (const CommutatorRecord& r : records) {
    if (!r.drift.has_value()) continue;
    delta.push_back(r.delta_fro);
    drift.push_back(*r.drift);
  }
  if (delta.size() < 3)
    raise("insufficient-data",
          "delta_drift_correlation: need >= 3 records with measured drift");
  const RankStats rs = rank_stats(delta, drift);
  DriftCorrelation out;
  out.spearman = rs.spearman;
  out.pearson = rs.pearson;
  out.theil_sen = rs.theil_sen;
  out.degenerate = rs.degenerate;
  if (rs.degenerate)
    out.warning =
        "zero variance in delta or drift: some correlations are undefined";
  return out;
}

ResidualBatch collect_residuals(const ModelWeights<double>& w,
                                const std::vector<std::vector<int>>& sequences,
                                int layer) {
  if (layer < 0 || layer > w.spec.n_layers)
    raise("invalid-argument", "collect_residuals: layer out of range");
  ResidualBatch batch;
  batch.reserve(sequences.size());
  for (const auto& seq : sequences) {
    const auto trace = forward<double>(w, seq);
    batch.push_back(trace.h[static_cast<std::size_t>(layer)]);
  }
  return batch;
}

}  // namespace wilson
