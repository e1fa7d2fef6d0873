#include "wilson/curvature.hpp"

#include "wilson/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <numeric>
#include <tuple>

namespace wilson {

namespace {

void check_loop(const ModelSpec& spec, const ActivationTrace<double>& trace,
                const LoopSpec& loop) {
  const Index t_len = static_cast<Index>(trace.tokens.size());
  if (loop.i < 0 || loop.i >= t_len || loop.j < 0 || loop.j >= t_len)
    raise("invalid-argument", "loop positions out of range");
  if (loop.j > loop.i)
    raise("masked-edge", "loop edge (" + std::to_string(loop.i) + " <- " +
                             std::to_string(loop.j) + ") is causally masked");
  if (loop.layer < 0 || loop.layer >= spec.n_layers - 1)
    raise("invalid-argument",
          "loop layer " + std::to_string(loop.layer) +
              " has no layer above it to close the loop");
}

Matd assemble(const std::function<Vecd(const Vecd&)>& apply, Index d) {
  Matd m(d, d);
  Vecd e = Vecd::Zero(d);
  for (Index c = 0; c < d; ++c) {
    e[c] = 1.0;
    m.col(c) = apply(e);
    e[c] = 0.0;
  }
  return m;
}

TransportOps loop_ops(const ModelWeights<double>& w,
                      const ActivationTrace<double>& trace,
                      const LoopSpec& loop) {
  const Index i = loop.i, j = loop.j;
  const int l = loop.layer;
  return TransportOps{
      [&w, &trace, i, j, l](const Vecd& v) {
        return jvp_horizontal<double>(w, trace, i, j, l, v);
      },
      [&w, &trace, i, l](const Vecd& v) {
        return jvp_vertical<double>(w, trace, i, l, v);
      },
      [&w, &trace, j, l](const Vecd& v) {
        return jvp_vertical<double>(w, trace, j, l, v);
      },
      [&w, &trace, i, j, l](const Vecd& v) {
        return jvp_horizontal<double>(w, trace, i, j, l + 1, v);
      },
  };
}

}  // namespace

double kappa_probe_estimate(const TransportOps& ops, Index d, int r,
                            SeededRng& rng, ProbeKind kind) {
  if (r < 1) raise("invalid-argument", "kappa needs at least one probe");
  if (d <= 0) raise("invalid-dimension", "kappa: dimension must be positive");
  double acc = 0;
  for (int s = 0; s < r; ++s) {
    const Vecd v = make_probe(rng, d, kind);
    const Vecd across_then_up = ops.layer_target(ops.attn_lower(v));
    const Vecd up_then_across = ops.attn_upper(ops.layer_source(v));
    acc += (across_then_up - up_then_across).squaredNorm();
  }
  return std::sqrt(acc / static_cast<double>(r));
}

double kappa_inv_estimate(const ModelWeights<double>& w,
                          const ActivationTrace<double>& trace,
                          const LoopSpec& loop, int r, SeededRng& rng,
                          ProbeKind kind) {
  check_loop(w.spec, trace, loop);
  return kappa_probe_estimate(loop_ops(w, trace, loop), w.spec.d_model, r, rng,
                              kind);
}

double kappa_exact(const ModelWeights<double>& w,
                   const ActivationTrace<double>& trace, const LoopSpec& loop) {
  check_loop(w.spec, trace, loop);
  const Index d = w.spec.d_model;
  const TransportOps ops = loop_ops(w, trace, loop);
  const Matd attn_lower = assemble(ops.attn_lower, d);
  const Matd layer_target = assemble(ops.layer_target, d);
  const Matd layer_source = assemble(ops.layer_source, d);
  const Matd attn_upper = assemble(ops.attn_upper, d);
  return (layer_target * attn_lower - attn_upper * layer_source).norm();
}

SelectedLoops select_loops(const ActivationTrace<double>& trace,
                           const SamplingKnobs& knobs, SeededRng& rng) {
  if (knobs.targets < 1 || knobs.neighbors < 1)
    raise("invalid-argument", "select_loops: targets and neighbors must be >= 1");
  if (knobs.explore_fraction < 0.0 || knobs.explore_fraction > 1.0)
    raise("invalid-argument", "select_loops: explore_fraction outside [0, 1]");
  const int n_layers = static_cast<int>(trace.alpha.size());
  const Index t_len = static_cast<Index>(trace.tokens.size());
  SelectedLoops out;
  if (n_layers < 2) {
    out.warnings.push_back("fewer than two layers: no loops to sample");
    return out;
  }

  const Index k = std::min<Index>(knobs.targets, t_len);
  if (k < knobs.targets)
    out.warnings.push_back("targets clamped to sequence length " +
                           std::to_string(t_len));
  bool neighbor_clamp = false;

  for (int l = 0; l + 1 < n_layers; ++l) {
    std::vector<Index> positions(static_cast<std::size_t>(t_len));
    std::iota(positions.begin(), positions.end(), Index{0});
    rng.shuffle(positions);
    positions.resize(static_cast<std::size_t>(k));
    std::sort(positions.begin(), positions.end());

    const std::size_t n_heads = trace.alpha[static_cast<std::size_t>(l)].size();
    for (Index i : positions) {
      // Head-averaged attention row: how much target i draws from each j.
      std::vector<std::pair<double, Index>> weighted;
      for (Index j = 0; j <= i; ++j) {
        double a = 0;
        for (std::size_t hh = 0; hh < n_heads; ++hh)
          a += trace.alpha[static_cast<std::size_t>(l)][hh](i, j);
        weighted.emplace_back(a / static_cast<double>(n_heads), j);
      }
      const Index m = std::min<Index>(knobs.neighbors, i + 1);
      neighbor_clamp |= m < knobs.neighbors;
      std::stable_sort(weighted.begin(), weighted.end(),
                       [](const auto& a, const auto& b) {
                         if (a.first != b.first) return a.first > b.first;
                         return a.second < b.second;
                       });

      std::vector<Index> sources;
      for (Index t = 0; t < m; ++t)
        sources.push_back(weighted[static_cast<std::size_t>(t)].second);
      const auto n_explore = static_cast<Index>(
          std::ceil(knobs.explore_fraction * static_cast<double>(m)));
      for (Index t = 0; t < n_explore; ++t)
        sources.push_back(static_cast<Index>(
            rng.uniform_int(static_cast<std::uint64_t>(i) + 1)));

      std::vector<bool> seen(static_cast<std::size_t>(i) + 1, false);
      for (Index j : sources) {
        if (seen[static_cast<std::size_t>(j)]) continue;
        seen[static_cast<std::size_t>(j)] = true;
        out.loops.push_back(LoopSpec{i, j, l});
      }
    }
  }
  if (neighbor_clamp)
    out.warnings.push_back(
        "neighbors clamped for targets with short causal windows");
  return out;
}

ScanConfirmResult scan_then_confirm(const ModelWeights<double>& w,
                                    const ActivationTrace<double>& trace,
                                    const std::vector<LoopSpec>& loops,
                                    const SamplingKnobs& knobs,
                                    const SeededRng& rng,
                                    const std::string& input_id, int workers) {
  using clock = std::chrono::steady_clock;
  for (const LoopSpec& loop : loops) check_loop(w.spec, trace, loop);
  if (!(knobs.scan_quantile >= 0.0 && knobs.scan_quantile <= 1.0))
    raise("invalid-argument", "scan_quantile outside [0, 1]");

  ScanConfirmResult out;
  const auto scan_start = clock::now();

  // Head maps depend only on weights, so hoist them across all loops.
  std::vector<std::vector<Matd>> maps(
      static_cast<std::size_t>(w.spec.n_layers));
  for (int l = 0; l < w.spec.n_layers; ++l)
    maps[static_cast<std::size_t>(l)] = head_value_maps<double>(w, l);

  out.scan.reserve(loops.size());
  for (const LoopSpec& loop : loops) {
    const auto l = static_cast<std::size_t>(loop.layer);
    const Matd lower = frozen_attn_transport_from_maps<double>(
        maps[l], trace.alpha[l], loop.i, loop.j);
    const Matd upper = frozen_attn_transport_from_maps<double>(
        maps[l + 1], trace.alpha[l + 1], loop.i, loop.j);
    LoopScore s;
    s.loop = loop;
    s.kappa = (lower - upper).norm();
    s.probes_used = 0;
    s.mode = ScoreMode::scan;
    s.input_id = input_id;
    out.scan.push_back(std::move(s));
  }
  out.scan_seconds =
      std::chrono::duration<double>(clock::now() - scan_start).count();

  // Graduation rule on the empirical CDF keeps the endpoints honest:
  // quantile 0 confirms everything, quantile 1 confirms nothing.
  const auto confirm_start = clock::now();
  std::vector<double> sorted;
  sorted.reserve(out.scan.size());
  for (const LoopScore& s : out.scan) sorted.push_back(s.kappa);
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  std::vector<std::size_t> graduating;
  for (std::size_t idx = 0; idx < out.scan.size(); ++idx) {
    const auto le = std::upper_bound(sorted.begin(), sorted.end(),
                                     out.scan[idx].kappa) -
                    sorted.begin();
    if (static_cast<double>(le) / n > knobs.scan_quantile)
      graduating.push_back(idx);
  }

  std::vector<LoopScore> slots(graduating.size());
  parallel_for(graduating.size(), workers, [&](std::size_t g) {
    const std::size_t idx = graduating[g];
    SeededRng stream = rng.child(idx);
    LoopScore s;
    s.loop = loops[idx];
    s.kappa = kappa_inv_estimate(w, trace, loops[idx], knobs.probes, stream,
                                 knobs.probe_kind);
    s.probes_used = knobs.probes;
    s.mode = ScoreMode::confirmed;
    s.input_id = input_id;
    slots[g] = std::move(s);
  });
  out.confirmed = std::move(slots);
  out.confirm_seconds =
      std::chrono::duration<double>(clock::now() - confirm_start).count();
  return out;
}

KappaAggregate aggregate_kappa(const std::vector<LoopScore>& scan,
                               const std::vector<LoopScore>& confirmed) {
  using Key = std::tuple<std::string, int, Index, Index>;
  std::map<Key, double> final_scores;
  for (const LoopScore& s : scan)
    final_scores[Key{s.input_id, s.loop.layer, s.loop.i, s.loop.j}] = s.kappa;
  KappaAggregate agg;
  for (const LoopScore& s : confirmed) {
    final_scores[Key{s.input_id, s.loop.layer, s.loop.i, s.loop.j}] = s.kappa;
    agg.n_confirmed += 1;
  }
  if (final_scores.empty())
    raise("insufficient-data", "aggregate_kappa: no loop scores");
  std::vector<double> values;
  values.reserve(final_scores.size());
  for (const auto& [key, kappa] : final_scores) {
    (void)key;
    values.push_back(kappa);
  }
  agg.n_loops = static_cast<Index>(values.size());
  agg.kappa_max = *std::max_element(values.begin(), values.end());
  agg.kappa_p95 = quantile_linear(values, 0.95);
  return agg;
}

}  // namespace wilson
