#include "wilson/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace wilson {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_binary(const std::vector<double>& scores,
                  const std::vector<int>& labels, const char* who) {
  if (scores.size() != labels.size())
    raise("invalid-dimension",
          std::string(who) + ": scores and labels differ in length");
  if (scores.empty())
    raise("insufficient-data", std::string(who) + ": empty sample");
  for (double s : scores)
    if (!std::isfinite(s))
      raise("invalid-argument", std::string(who) + ": non-finite score");
  bool has0 = false, has1 = false;
  for (int l : labels) {
    if (l == 0)
      has0 = true;
    else if (l == 1)
      has1 = true;
    else
      raise("invalid-argument", std::string(who) + ": labels must be 0 or 1");
  }
  if (!(has0 && has1))
    raise("degenerate-labels",
          std::string(who) + ": need both classes present");
}

void check_paired(const std::vector<double>& x, const std::vector<double>& y,
                  const char* who) {
  if (x.size() != y.size())
    raise("invalid-dimension", std::string(who) + ": length mismatch");
  if (x.size() < 2)
    raise("insufficient-data", std::string(who) + ": need at least two pairs");
}

// Merge sort that counts inversions in-place; the workhorse of Knight's
// tau computation.
std::uint64_t merge_count(std::vector<double>& v, std::vector<double>& buf,
                          std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t inv = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  std::size_t a = lo, b = mid, out = lo;
  while (a < mid && b < hi) {
    if (v[b] < v[a]) {
      inv += mid - a;
      buf[out++] = v[b++];
    } else {
      buf[out++] = v[a++];
    }
  }
  while (a < mid) buf[out++] = v[a++];
  while (b < hi) buf[out++] = v[b++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo),
            buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return inv;
}

// Sum of k*(k-1)/2 over runs of equal values in a sorted range.
std::uint64_t tie_pairs(const std::vector<double>& sorted) {
  std::uint64_t total = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i + 1;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const std::uint64_t k = j - i;
    total += k * (k - 1) / 2;
    i = j;
  }
  return total;
}

}  // namespace

BinaryMetrics roc_auc_ap(const std::vector<double>& scores,
                         const std::vector<int>& labels) {
  check_binary(scores, labels, "roc_auc_ap");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  double total_pos = 0;
  for (int l : labels) total_pos += l;
  const double total_neg = static_cast<double>(n) - total_pos;

  BinaryMetrics out;
  out.roc.push_back({0.0, 0.0});
  double tp = 0, fp = 0, auc = 0, ap = 0, prev_recall = 0;
  double prev_fpr = 0, prev_tpr = 0;
  std::size_t i = 0;
  while (i < n) {
    // Tied scores enter the sweep as one block; splitting them would make the
    // curve depend on input order.
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1)
        tp += 1;
      else
        fp += 1;
      ++j;
    }
    i = j;
    const double tpr = tp / total_pos;
    const double fpr = fp / total_neg;
    auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    out.roc.push_back({fpr, tpr});
    const double precision = tp / (tp + fp);
    ap += (tpr - prev_recall) * precision;
    out.pr.push_back({tpr, precision});
    prev_recall = tpr;
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  out.auc = auc;
  out.ap = ap;
  return out;
}

CalibrationReport calibration(const std::vector<double>& scores,
                              const std::vector<int>& labels, int n_bins) {
  check_binary(scores, labels, "calibration");
  if (n_bins < 1) raise("invalid-argument", "calibration: need >= 1 bin");

  const auto [mn_it, mx_it] = std::minmax_element(scores.begin(), scores.end());
  const double mn = *mn_it, mx = *mx_it;
  CalibrationReport rep;
  rep.norm_min = mn;
  rep.norm_max = mx;
  std::vector<double> conf(scores.size());
  if (mx > mn) {
    rep.normalized = true;
    for (std::size_t i = 0; i < scores.size(); ++i)
      conf[i] = (scores[i] - mn) / (mx - mn);
  } else if (mn >= 0.0 && mn <= 1.0) {
    // A constant score that already reads as a probability is usable as-is;
    // squashing it would invent a confidence of 0/0.
    rep.normalized = false;
    conf = scores;
  } else {
    raise("invalid-argument",
          "calibration: constant scores outside [0,1] carry no confidence");
  }

  struct Acc {
    double conf_sum = 0, acc_sum = 0;
    int count = 0;
  };
  std::vector<Acc> acc(static_cast<std::size_t>(n_bins));
  double brier = 0;
  for (std::size_t i = 0; i < conf.size(); ++i) {
    const double d = conf[i] - labels[i];
    brier += d * d;
    auto b = static_cast<std::size_t>(conf[i] * n_bins);
    if (b >= acc.size()) b = acc.size() - 1;  // conf == 1.0 lands in last bin
    acc[b].conf_sum += conf[i];
    acc[b].acc_sum += labels[i];
    acc[b].count += 1;
  }
  rep.brier = brier / static_cast<double>(conf.size());

  const double z = 1.96;
  double ece = 0;
  for (const auto& a : acc) {
    CalibrationBin bin;
    bin.count = a.count;
    if (a.count > 0) {
      bin.conf = a.conf_sum / a.count;
      bin.acc = a.acc_sum / a.count;
      const double nn = a.count;
      const double p = bin.acc;
      const double denom = 1.0 + z * z / nn;
      const double center = (p + z * z / (2.0 * nn)) / denom;
      const double half =
          z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / denom;
      bin.wilson_lo = center - half;
      bin.wilson_hi = center + half;
      ece += (nn / static_cast<double>(conf.size())) * std::abs(bin.acc - bin.conf);
    }
    rep.bins.push_back(bin);
  }
  rep.ece = ece;
  return rep;
}

std::vector<double> mid_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && v[order[j]] == v[order[i]]) ++j;
    // 1-based ranks i+1 .. j averaged over the tied run.
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  check_paired(x, y, "pearson");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return kNaN;
  return sxy / std::sqrt(sxx * syy);
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  check_paired(x, y, "spearman");
  return pearson(mid_ranks(x), mid_ranks(y));
}

double kendall_tau_b(const std::vector<double>& x,
                     const std::vector<double>& y) {
  check_paired(x, y, "kendall_tau_b");
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (x[a] != x[b]) return x[a] < x[b];
    return y[a] < y[b];
  });

  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x[order[i]];
    ys[i] = y[order[i]];
  }

  // Joint ties: runs where both coordinates repeat in the (x, y) sort.
  std::uint64_t n3 = 0;
  {
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i + 1;
      while (j < n && xs[j] == xs[i] && ys[j] == ys[i]) ++j;
      const std::uint64_t k = j - i;
      n3 += k * (k - 1) / 2;
      i = j;
    }
  }
  const std::uint64_t n1 = tie_pairs(xs);

  std::vector<double> buf(n);
  const std::uint64_t swaps = merge_count(ys, buf, 0, n);  // ys now sorted
  const std::uint64_t n2 = tie_pairs(ys);

  const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  if (n0 == n1 || n0 == n2) return kNaN;  // all x tied or all y tied
  const double numerator = static_cast<double>(n0) - static_cast<double>(n1) -
                           static_cast<double>(n2) + static_cast<double>(n3) -
                           2.0 * static_cast<double>(swaps);
  const double denom = std::sqrt(static_cast<double>(n0 - n1)) *
                       std::sqrt(static_cast<double>(n0 - n2));
  return numerator / denom;
}

double theil_sen(const std::vector<double>& x, const std::vector<double>& y) {
  check_paired(x, y, "theil_sen");
  std::vector<double> slopes;
  slopes.reserve(x.size() * (x.size() - 1) / 2);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j)
      if (x[i] != x[j]) slopes.push_back((y[j] - y[i]) / (x[j] - x[i]));
  if (slopes.empty()) return kNaN;
  const std::size_t m = slopes.size();
  auto mid = slopes.begin() + static_cast<std::ptrdiff_t>(m / 2);
  std::nth_element(slopes.begin(), mid, slopes.end());
  if (m % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(slopes.begin(), mid);
  return (lo + hi) / 2.0;
}

RankStats rank_stats(const std::vector<double>& x,
                     const std::vector<double>& y) {
  RankStats rs;
  rs.pearson = pearson(x, y);
  rs.spearman = spearman(x, y);
  rs.kendall_tau_b = kendall_tau_b(x, y);
  rs.theil_sen = theil_sen(x, y);
  rs.degenerate = std::isnan(rs.pearson) || std::isnan(rs.spearman) ||
                  std::isnan(rs.kendall_tau_b) || std::isnan(rs.theil_sen);
  return rs;
}

double wasserstein1(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty())
    raise("insufficient-data", "wasserstein1: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return acc / static_cast<double>(a.size());
  }
  // Piecewise-constant quantile functions break only at i/|a| and j/|b|, so
  // integrating |F_a^{-1} - F_b^{-1}| over the merged grid is exact.
  std::vector<double> cuts{0.0, 1.0};
  for (std::size_t i = 1; i < a.size(); ++i)
    cuts.push_back(static_cast<double>(i) / static_cast<double>(a.size()));
  for (std::size_t j = 1; j < b.size(); ++j)
    cuts.push_back(static_cast<double>(j) / static_cast<double>(b.size()));
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  double acc = 0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double w = cuts[k + 1] - cuts[k];
    const double q = (cuts[k] + cuts[k + 1]) / 2.0;
    const auto ia = std::min(
        a.size() - 1, static_cast<std::size_t>(q * static_cast<double>(a.size())));
    const auto ib = std::min(
        b.size() - 1, static_cast<std::size_t>(q * static_cast<double>(b.size())));
    acc += w * std::abs(a[ia] - b[ib]);
  }
  return acc;
}

BootstrapCi bootstrap_ci(
    const std::function<double(const std::vector<Index>&)>& statistic,
    Index n, const std::vector<int>& strata, const BootstrapConfig& cfg) {
  if (n < 1) raise("insufficient-data", "bootstrap_ci: empty sample");
  if (!strata.empty() && static_cast<Index>(strata.size()) != n)
    raise("invalid-dimension", "bootstrap_ci: strata length mismatch");
  if (cfg.resamples < 1)
    raise("invalid-argument", "bootstrap_ci: need >= 1 resample");
  if (!(cfg.level > 0.0 && cfg.level < 1.0))
    raise("invalid-argument", "bootstrap_ci: level must lie in (0, 1)");

  // Group indices by stratum, strata visited in sorted label order so the
  // draw sequence is a function of the data alone.
  std::vector<std::pair<int, std::vector<Index>>> groups;
  if (strata.empty()) {
    std::vector<Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Index{0});
    groups.emplace_back(0, std::move(all));
  } else {
    std::vector<int> keys(strata);
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    for (int key : keys) {
      std::vector<Index> members;
      for (Index i = 0; i < n; ++i)
        if (strata[static_cast<std::size_t>(i)] == key) members.push_back(i);
      groups.emplace_back(key, std::move(members));
    }
  }

  std::vector<Index> identity(static_cast<std::size_t>(n));
  std::iota(identity.begin(), identity.end(), Index{0});
  BootstrapCi out;
  out.point = statistic(identity);
  out.resamples = cfg.resamples;

  const SeededRng root(cfg.seed);
  std::vector<double> stats;
  stats.reserve(static_cast<std::size_t>(cfg.resamples));
  std::vector<Index> sample;
  sample.reserve(static_cast<std::size_t>(n));
  for (int r = 0; r < cfg.resamples; ++r) {
    SeededRng rng = root.child(static_cast<std::uint64_t>(r));
    sample.clear();
    for (const auto& [key, members] : groups) {
      (void)key;
      for (std::size_t k = 0; k < members.size(); ++k)
        sample.push_back(members[rng.uniform_int(members.size())]);
    }
    stats.push_back(statistic(sample));
  }
  const double alpha = 1.0 - cfg.level;
  out.lo = quantile_linear(stats, alpha / 2.0);
  out.hi = quantile_linear(stats, 1.0 - alpha / 2.0);
  return out;
}

}  // namespace wilson
