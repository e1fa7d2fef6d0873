#include "wilson/gate.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <tuple>

#include "wilson/artifacts.hpp"
#include "wilson/numerics.hpp"

namespace wilson {
namespace {

void check_thresholds(const Thresholds& t) {
  const double fields[] = {t.tau_kappa, t.tau_delta, t.tol_delta_orbit};
  for (double v : fields) {
    if (!std::isfinite(v) || v < 0.0)
      raise("invalid-argument", "thresholds must be finite and >= 0");
  }
}

std::string compare_reason(const std::string& lhs_name, double lhs, bool ok,
                           const std::string& rhs_name, double rhs) {
  return lhs_name + " " + format_double(lhs) + (ok ? " <= " : " > ") +
         rhs_name + " " + format_double(rhs);
}

}  // namespace

const char* gate_action_name(GateAction action) {
  switch (action) {
    case GateAction::parallel_ok: return "parallel_ok";
    case GateAction::fuse_ok: return "fuse_ok";
    case GateAction::sequentialize: return "sequentialize";
    case GateAction::add_verifiers: return "add_verifiers";
    case GateAction::fail_build: return "fail_build";
    case GateAction::accept: return "accept";
  }
  raise("unmapped-signal", "gate_action_name: unknown action");
}

PlanStep plan_step(const std::vector<std::string>& frontier,
                   const std::map<std::string, double>& kappa_map,
                   const Thresholds& thresholds) {
  check_thresholds(thresholds);
  PlanStep step;
  for (const auto& id : frontier) {
    auto it = kappa_map.find(id);
    if (it == kappa_map.end()) {
      step.missing.push_back(id);
      step.sequential.push_back(id);
    } else if (it->second <= thresholds.tau_kappa) {
      step.parallel.push_back(id);
    } else {
      step.sequential.push_back(id);
    }
  }
  return step;
}

GateDecision signal_to_action(const Signal& signal,
                              const Thresholds& thresholds) {
  check_thresholds(thresholds);
  GateDecision decision;
  decision.subject = signal.subject;
  switch (signal.kind) {
    case SignalKind::curvature: {
      const bool ok = signal.value <= thresholds.tau_kappa;
      decision.action = ok ? GateAction::parallel_ok : GateAction::add_verifiers;
      decision.reason =
          compare_reason("kappa", signal.value, ok, "tau_kappa", thresholds.tau_kappa);
      return decision;
    }
    case SignalKind::commutator: {
      const bool ok = signal.value <= thresholds.tau_delta;
      decision.action = ok ? GateAction::fuse_ok : GateAction::sequentialize;
      decision.reason =
          compare_reason("delta", signal.value, ok, "tau_delta", thresholds.tau_delta);
      return decision;
    }
    case SignalKind::invariance: {
      // Same rule as the orbit label: a decision is unstable iff IR < 1 - tol.
      const double min_ir = 1.0 - thresholds.tol_delta_orbit;
      const bool ok = signal.value >= min_ir;
      decision.action = ok ? GateAction::accept : GateAction::fail_build;
      decision.reason = "ir " + format_double(signal.value) + (ok ? " >= " : " < ") +
                        "min_ir " + format_double(min_ir);
      return decision;
    }
    case SignalKind::gauge: {
      const bool ok = signal.value <= kVarianceRatioLimit;
      decision.action = ok ? GateAction::accept : GateAction::fail_build;
      decision.reason = compare_reason("variance_ratio", signal.value, ok, "limit",
                                       kVarianceRatioLimit);
      return decision;
    }
  }
  raise("unmapped-signal", "signal_to_action: unknown signal kind " +
                               std::to_string(static_cast<int>(signal.kind)));
}

std::vector<CounterExample> reorder_counterexamples(
    const std::vector<CommutatorRecord>& records, const Thresholds& thresholds) {
  check_thresholds(thresholds);
  std::vector<CounterExample> out;
  for (const auto& r : records) {
    if (r.delta_fro > thresholds.tau_delta)
      out.push_back({r.batch_id, r.module_a, r.module_b, r.delta_fro});
  }
  std::sort(out.begin(), out.end(),
            [](const CounterExample& x, const CounterExample& y) {
              if (x.delta != y.delta) return x.delta > y.delta;
              return std::tie(x.module_a, x.module_b, x.input_id) <
                     std::tie(y.module_a, y.module_b, y.input_id);
            });
  return out;
}

GateReport ci_gate(const MetricsSnapshot& current,
                   const MetricsSnapshot& previous) {
  if (current.schema != previous.schema)
    raise("schema-mismatch", "ci_gate: snapshot schema " +
                                 std::to_string(current.schema) + " vs " +
                                 std::to_string(previous.schema));
  GateReport report;
  auto add_rule = [&report](const std::string& rule, double value,
                            double threshold) {
    const bool pass = value <= threshold;  // NaN fails
    report.rules.push_back({rule, value, threshold, pass});
    report.pass = report.pass && pass;
    report.text += "rule=" + rule + " value=" + format_double(value) +
                   " threshold=" + format_double(threshold) +
                   " verdict=" + (pass ? "pass" : "fail") + "\n";
  };
  add_rule("variance_ratio", current.variance_ratio, kVarianceRatioLimit);
  add_rule("auc_drop", previous.auc - current.auc, kAucDropLimit);
  report.text += std::string("gate=") + (report.pass ? "pass" : "fail") + "\n";
  return report;
}

PlattModel platt_calibrate(const std::vector<double>& scores,
                           const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    raise("invalid-dimension", "platt_calibrate: length mismatch");
  if (scores.empty()) raise("insufficient-data", "platt_calibrate: empty sample");
  std::size_t np = 0;
  std::size_t nn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i]))
      raise("invalid-argument", "platt_calibrate: non-finite score");
    if (labels[i] == 1) {
      ++np;
    } else if (labels[i] == 0) {
      ++nn;
    } else {
      raise("invalid-argument", "platt_calibrate: labels must be 0 or 1");
    }
  }
  if (np == 0 || nn == 0)
    raise("degenerate-labels", "platt_calibrate: need both labels present");

  // Smoothed targets keep the optimum finite even for separable scores.
  const double hi = (static_cast<double>(np) + 1.0) / (static_cast<double>(np) + 2.0);
  const double lo = 1.0 / (static_cast<double>(nn) + 2.0);
  const std::size_t n = scores.size();
  std::vector<double> target(n);
  for (std::size_t i = 0; i < n; ++i) target[i] = labels[i] == 1 ? hi : lo;

  // Cross-entropy against the smoothed targets, in overflow-safe form.
  auto objective = [&](double a, double b) {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = a * scores[i] + b;
      if (z >= 0.0)
        f += (1.0 - target[i]) * z + std::log1p(std::exp(-z));
      else
        f += -target[i] * z + std::log1p(std::exp(z));
    }
    return f;
  };

  double a = 0.0;
  double b = std::log((static_cast<double>(np) + 1.0) /
                      (static_cast<double>(nn) + 1.0));
  double f = objective(a, b);
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    Eigen::Matrix2d h = Eigen::Matrix2d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const double z = a * scores[i] + b;
      const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                : std::exp(z) / (1.0 + std::exp(z));
      const double r = p - target[i];
      const double w = std::max(p * (1.0 - p), 1e-12);
      g[0] += r * scores[i];
      g[1] += r;
      h(0, 0) += w * scores[i] * scores[i];
      h(0, 1) += w * scores[i];
      h(1, 1) += w;
    }
    h(1, 0) = h(0, 1);
    if (g.lpNorm<Eigen::Infinity>() < 1e-10) break;
    h(0, 0) += 1e-12;
    h(1, 1) += 1e-12;
    const Eigen::Vector2d dir = h.ldlt().solve(-g);
    const double slope = g.dot(dir);  // < 0 for a descent direction
    double step = 1.0;
    double a_new = a + dir[0];
    double b_new = b + dir[1];
    double f_new = objective(a_new, b_new);
    int halvings = 0;
    while (f_new > f + 1e-4 * step * slope && halvings < 30) {
      step *= 0.5;
      ++halvings;
      a_new = a + step * dir[0];
      b_new = b + step * dir[1];
      f_new = objective(a_new, b_new);
    }
    if (f_new >= f && halvings >= 30) break;
    a = a_new;
    b = b_new;
    f = f_new;
  }
  return {a, b};
}

double platt_apply(const PlattModel& model, double score) {
  if (!std::isfinite(score))
    raise("invalid-argument", "platt_apply: non-finite score");
  const double z = model.slope * score + model.intercept;
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace wilson
