#include "wilson/gauge.hpp"

#include "wilson/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wilson {

namespace {

constexpr double kEigClamp = 1e-5;

double cosine_distance(const Vecd& a, const Vecd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 && nb == 0.0) return 0.0;
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - a.dot(b) / (na * nb);
}

Vecd saliency(const Matd& features) {
  return features.cwiseAbs().colwise().mean().transpose();
}

double population_variance(const std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  return var / static_cast<double>(v.size());
}

}  // namespace

WhitenResult whiten(const Matd& h) {
  if (h.rows() < 2)
    raise("insufficient-samples", "whiten: need at least two rows");
  if (!h.allFinite()) raise("invalid-argument", "whiten: non-finite features");
  WhitenResult out;
  out.mean = h.colwise().mean().transpose();
  Matd centered = h.rowwise() - out.mean.transpose();
  const Matd cov = centered.transpose() * centered /
                   std::max<double>(1.0, static_cast<double>(h.rows() - 1));
  const SpectralPair es = eigh_spd(cov);
  Vecd inv_sqrt(es.eigenvalues.size());
  for (Index k = 0; k < es.eigenvalues.size(); ++k)
    inv_sqrt[k] = 1.0 / std::sqrt(std::max(es.eigenvalues[k], kEigClamp));
  out.whitener = es.eigenvectors * inv_sqrt.asDiagonal() *
                 es.eigenvectors.transpose();
  out.whitened = centered * out.whitener;
  return out;
}

Matd procrustes_align(const Matd& h1, const Matd& h2) {
  if (h1.rows() != h2.rows() || h1.cols() != h2.cols())
    raise("shape-mismatch", "procrustes_align: operands differ in shape");
  const SvdTriple s = svd(h2.transpose() * h1);
  return s.u * s.v.transpose();
}

GaugeMap fit_gauge(const Matd& reference_whitened, const Matd& h) {
  const WhitenResult w = whiten(h);
  GaugeMap map;
  map.mean = w.mean;
  map.whitener = w.whitener;
  map.rotation = procrustes_align(reference_whitened, w.whitened);
  return map;
}

Matd apply_gauge(const GaugeMap& map, const Matd& h) {
  if (h.cols() != map.mean.size())
    raise("shape-mismatch", "apply_gauge: feature width mismatch");
  return (h.rowwise() - map.mean.transpose()) * map.whitener * map.rotation;
}

double slice_probe_accuracy(const Matd& features,
                            const std::vector<int>& labels) {
  const Index n = features.rows();
  if (static_cast<Index>(labels.size()) != n)
    raise("invalid-dimension", "probe: labels length != rows");
  if (n < 2) raise("insufficient-samples", "probe: need at least two rows");
  const Index p = std::min<Index>(8, features.cols());
  Matd design(n, p + 1);
  design.leftCols(p) = features.leftCols(p);
  design.col(p).setOnes();
  Vecd y(n);
  for (Index i = 0; i < n; ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    if (l != 0 && l != 1)
      raise("invalid-argument", "probe: labels must be 0 or 1");
    y[i] = l == 1 ? 1.0 : -1.0;
  }
  const Vecd beta = design.colPivHouseholderQr().solve(y);
  const Vecd pred = design * beta;
  double hits = 0;
  for (Index i = 0; i < n; ++i)
    hits += (pred[i] >= 0.0 ? 1.0 : -1.0) == y[i];
  return hits / static_cast<double>(n);
}

GaugeStabilityReport gauge_stability_report(const std::vector<Matd>& runs,
                                            const std::vector<int>& labels,
                                            int layer,
                                            std::vector<int> seed_ids) {
  if (runs.size() < 2)
    raise("insufficient-seeds", "gauge_stability_report: need >= 2 seeds");
  for (const Matd& r : runs)
    if (r.rows() != runs[0].rows() || r.cols() != runs[0].cols())
      raise("shape-mismatch",
            "gauge_stability_report: seeds must share the data slice");
  if (seed_ids.empty()) {
    seed_ids.resize(runs.size());
    for (std::size_t s = 0; s < runs.size(); ++s)
      seed_ids[s] = static_cast<int>(s);
  }
  if (seed_ids.size() != runs.size())
    raise("invalid-dimension", "gauge_stability_report: seed_ids length");

  const std::size_t n_seeds = runs.size();
  const WhitenResult ref = whiten(runs[0]);

  std::vector<Matd> aligned(n_seeds);
  std::vector<GaugeMap> maps(n_seeds);
  for (std::size_t s = 0; s < n_seeds; ++s) {
    maps[s] = fit_gauge(ref.whitened, runs[s]);
    aligned[s] = apply_gauge(maps[s], runs[s]);
  }

  std::vector<double> acc_pre(n_seeds), acc_post(n_seeds);
  for (std::size_t s = 0; s < n_seeds; ++s) {
    acc_pre[s] = slice_probe_accuracy(runs[s], labels);
    acc_post[s] = slice_probe_accuracy(aligned[s], labels);
  }

  GaugeStabilityReport rep;
  rep.probe_var_pre = population_variance(acc_pre);
  rep.probe_var_post = population_variance(acc_post);
  if (rep.probe_var_pre == 0.0)
    rep.variance_ratio = rep.probe_var_post == 0.0
                             ? 0.0
                             : std::numeric_limits<double>::infinity();
  else
    rep.variance_ratio = rep.probe_var_post / rep.probe_var_pre;

  // Saliency rankings and mean directions, each seed against seed 0.
  const Vecd sal_pre_ref = saliency(runs[0]);
  const Vecd sal_post_ref = saliency(aligned[0]);
  const Vecd mean_pre_ref = runs[0].colwise().mean().transpose();
  // Post side: the mean through the linear gauge part only — subtracting the
  // per-run mean first would make every vector identically zero.
  const Vecd mean_post_ref =
      (mean_pre_ref.transpose() * maps[0].whitener * maps[0].rotation)
          .transpose();

  auto tau_of = [](const Vecd& a, const Vecd& b) {
    std::vector<double> va(a.data(), a.data() + a.size());
    std::vector<double> vb(b.data(), b.data() + b.size());
    return kendall_tau_b(va, vb);
  };

  for (std::size_t s = 0; s < n_seeds; ++s) {
    GaugeStats pre;
    pre.layer = layer;
    pre.seed = seed_ids[s];
    pre.kendall_tau = tau_of(saliency(runs[s]), sal_pre_ref);
    pre.probe_var = rep.probe_var_pre;
    const Vecd mean_s = runs[s].colwise().mean().transpose();
    pre.cosine_dist = cosine_distance(mean_s, mean_pre_ref);
    rep.pre.push_back(pre);

    GaugeStats post;
    post.layer = layer;
    post.seed = seed_ids[s];
    post.kendall_tau = tau_of(saliency(aligned[s]), sal_post_ref);
    post.probe_var = rep.probe_var_post;
    const Vecd mean_post =
        (mean_s.transpose() * maps[s].whitener * maps[s].rotation).transpose();
    post.cosine_dist = cosine_distance(mean_post, mean_post_ref);
    rep.post.push_back(post);
  }
  return rep;
}

}  // namespace wilson
