#pragma once

#include <map>
#include <string>
#include <vector>

#include "wilson/commutator.hpp"

namespace wilson {

// Gating thresholds. tau_kappa bounds loop curvature for parallel scheduling,
// tau_delta bounds pairwise commutators for fuse/reorder safety, and
// tol_delta_orbit is the margin on orbit agreement below which a decision
// counts as unstable. All must be >= 0.
struct Thresholds {
  double tau_kappa = 0.12;
  double tau_delta = 0.10;
  double tol_delta_orbit = 0.02;
};

enum class GateAction {
  parallel_ok,
  fuse_ok,
  sequentialize,
  add_verifiers,
  fail_build,
  accept,
};

const char* gate_action_name(GateAction action);

struct GateDecision {
  std::string subject;
  GateAction action = GateAction::accept;
  std::string reason;  // spells out the comparison that picked the action
};

enum class SignalKind { curvature, commutator, invariance, gauge };

// One scored observation: value is kappa, delta, an invariance ratio, or a
// cross-seed variance ratio depending on kind.
struct Signal {
  SignalKind kind = SignalKind::curvature;
  std::string subject;
  double value = 0.0;
};

struct PlanStep {
  std::vector<std::string> parallel;
  std::vector<std::string> sequential;
  // Frontier ids with no kappa entry; scheduled sequentially as the safe
  // default and surfaced here so callers can log them.
  std::vector<std::string> missing;
};

// Partitions frontier by curvature: kappa <= tau_kappa runs in parallel,
// anything above (or unscored) is sequentialized. Frontier order is kept
// within each output list; the boundary kappa == tau_kappa counts as
// parallel.
PlanStep plan_step(const std::vector<std::string>& frontier,
                   const std::map<std::string, double>& kappa_map,
                   const Thresholds& thresholds = {});

// Rule table:
//   curvature   value <= tau_kappa        -> parallel_ok   else add_verifiers
//   commutator  value <= tau_delta        -> fuse_ok       else sequentialize
//   invariance  value >= 1-tol_delta_orbit-> accept        else fail_build
//   gauge       value <= variance limit   -> accept        else fail_build
// Unknown kinds raise "unmapped-signal".
GateDecision signal_to_action(const Signal& signal,
                              const Thresholds& thresholds = {});

// Concrete reorder counterexample: applying module_a then module_b vs the
// reverse order drifted by more than tau_delta on this input.
struct CounterExample {
  std::string input_id;
  std::string module_a;
  std::string module_b;
  double delta = 0.0;
};

// Emits the (input, pair) tuples whose commutator strictly exceeds
// tau_delta, largest delta first (ties broken by ids).
std::vector<CounterExample> reorder_counterexamples(
    const std::vector<CommutatorRecord>& records,
    const Thresholds& thresholds = {});

inline constexpr double kVarianceRatioLimit = 0.6;
inline constexpr double kAucDropLimit = 0.03;

struct MetricsSnapshot {
  int schema = 1;
  double auc = 0.0;             // how well kappa ranks failure labels
  double variance_ratio = 0.0;  // aligned / unaligned cross-seed probe variance
};

struct GateRuleResult {
  std::string rule;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = true;
};

struct GateReport {
  bool pass = true;
  std::vector<GateRuleResult> rules;
  // One "rule=<r> value=<v> threshold=<t> verdict=<pass|fail>" line per rule
  // followed by a final "gate=<pass|fail>" line.
  std::string text;
};

// Regression gate between two metric snapshots of the same schema. Fails iff
// the current variance ratio exceeds kVarianceRatioLimit or the AUC dropped
// by more than kAucDropLimit relative to `previous`; boundaries pass.
GateReport ci_gate(const MetricsSnapshot& current,
                   const MetricsSnapshot& previous);

// Logistic recalibration p = sigmoid(slope * score + intercept), fit by
// Newton iteration on the smoothed-target log-loss.
struct PlattModel {
  double slope = 0.0;
  double intercept = 0.0;
};

PlattModel platt_calibrate(const std::vector<double>& scores,
                           const std::vector<int>& labels);
double platt_apply(const PlattModel& model, double score);

}  // namespace wilson
