#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "wilson/gate.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "wilson/numerics.hpp"

using namespace wilson;
using doctest::Approx;

TEST_CASE("plan_step trivial partitions") {
  std::vector<std::string> frontier = {"a", "b", "c"};
  std::map<std::string, double> zeros = {{"a", 0.0}, {"b", 0.0}, {"c", 0.0}};
  PlanStep all_par = plan_step(frontier, zeros);
  CHECK(all_par.parallel == frontier);
  CHECK(all_par.sequential.empty());
  CHECK(all_par.missing.empty());

  std::map<std::string, double> ones = {{"a", 1.0}, {"b", 1.0}, {"c", 1.0}};
  PlanStep all_seq = plan_step(frontier, ones);
  CHECK(all_seq.parallel.empty());
  CHECK(all_seq.sequential == frontier);
}

TEST_CASE("plan_step boundary kappa goes parallel") {
  Thresholds t;
  PlanStep step = plan_step({"edge"}, {{"edge", t.tau_kappa}}, t);
  CHECK(step.parallel == std::vector<std::string>{"edge"});
  CHECK(step.sequential.empty());
}

TEST_CASE("plan_step missing kappa is sequential and logged") {
  std::vector<std::string> frontier = {"a", "ghost", "b"};
  std::map<std::string, double> kappa = {{"a", 0.05}, {"b", 0.5}};
  PlanStep step = plan_step(frontier, kappa);
  CHECK(step.parallel == std::vector<std::string>{"a"});
  CHECK(step.sequential == std::vector<std::string>{"ghost", "b"});
  CHECK(step.missing == std::vector<std::string>{"ghost"});
}

TEST_CASE("plan_step is a partition of the frontier") {
  SeededRng rng(11);
  std::vector<std::string> frontier;
  std::map<std::string, double> kappa;
  for (int i = 0; i < 40; ++i) {
    frontier.push_back("t" + std::to_string(i));
    if (i % 5 != 0) kappa[frontier.back()] = 0.3 * rng.uniform();
  }
  PlanStep step = plan_step(frontier, kappa);
  std::set<std::string> par(step.parallel.begin(), step.parallel.end());
  std::set<std::string> seq(step.sequential.begin(), step.sequential.end());
  CHECK(par.size() + seq.size() == frontier.size());
  for (const auto& id : par) CHECK(seq.count(id) == 0);
  for (const auto& id : step.missing) CHECK(seq.count(id) == 1);
}

TEST_CASE("plan_step parallel set grows with tau_kappa") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SeededRng rng(seed);
    std::vector<std::string> frontier;
    std::map<std::string, double> kappa;
    for (int i = 0; i < 25; ++i) {
      frontier.push_back("n" + std::to_string(i));
      kappa[frontier.back()] = 0.25 * rng.uniform();
    }
    Thresholds lo_t;
    lo_t.tau_kappa = 0.05;
    Thresholds hi_t;
    hi_t.tau_kappa = 0.15;
    PlanStep lo = plan_step(frontier, kappa, lo_t);
    PlanStep hi = plan_step(frontier, kappa, hi_t);
    std::set<std::string> hi_par(hi.parallel.begin(), hi.parallel.end());
    for (const auto& id : lo.parallel) CHECK(hi_par.count(id) == 1);
  }
}

TEST_CASE("thresholds must be finite and nonnegative") {
  Thresholds bad;
  bad.tau_kappa = -0.1;
  CHECK_THROWS_WITH_AS(plan_step({}, {}, bad), doctest::Contains("invalid-argument"),
                       Error);
  bad = Thresholds{};
  bad.tol_delta_orbit = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(signal_to_action({SignalKind::gauge, "g", 0.1}, bad),
                       doctest::Contains("invalid-argument"), Error);
}

TEST_CASE("signal_to_action commutator rows") {
  GateDecision low = signal_to_action({SignalKind::commutator, "p0", 0.05});
  CHECK(low.action == GateAction::fuse_ok);
  CHECK(low.subject == "p0");
  CHECK(low.reason == "delta 0.05 <= tau_delta 0.1");

  GateDecision high = signal_to_action({SignalKind::commutator, "p1", 0.31});
  CHECK(high.action == GateAction::sequentialize);
  CHECK(high.reason == "delta 0.31 > tau_delta 0.1");

  GateDecision edge = signal_to_action({SignalKind::commutator, "p2", 0.10});
  CHECK(edge.action == GateAction::fuse_ok);
}

TEST_CASE("signal_to_action curvature rows") {
  CHECK(signal_to_action({SignalKind::curvature, "l0", 0.05}).action ==
        GateAction::parallel_ok);
  CHECK(signal_to_action({SignalKind::curvature, "l1", 0.12}).action ==
        GateAction::parallel_ok);
  GateDecision high = signal_to_action({SignalKind::curvature, "l2", 0.3});
  CHECK(high.action == GateAction::add_verifiers);
  CHECK(high.reason == "kappa 0.3 > tau_kappa 0.12");
}

TEST_CASE("signal_to_action invariance rows") {
  CHECK(signal_to_action({SignalKind::invariance, "in0", 1.0}).action ==
        GateAction::accept);
  GateDecision fail = signal_to_action({SignalKind::invariance, "in1", 0.5});
  CHECK(fail.action == GateAction::fail_build);
  CHECK(fail.reason == "ir 0.5 < min_ir 0.98");
  // boundary matches the orbit label rule: ir == 1 - tol is still stable
  CHECK(signal_to_action({SignalKind::invariance, "in2", 0.98}).action ==
        GateAction::accept);
}

TEST_CASE("signal_to_action gauge rows") {
  GateDecision bad = signal_to_action({SignalKind::gauge, "run", 0.7});
  CHECK(bad.action == GateAction::fail_build);
  CHECK(bad.reason == "variance_ratio 0.7 > limit 0.6");
  CHECK(signal_to_action({SignalKind::gauge, "run", 0.6}).action ==
        GateAction::accept);
  CHECK(signal_to_action({SignalKind::gauge, "run", 0.4}).action ==
        GateAction::accept);
}

TEST_CASE("signal_to_action is deterministic and rejects unknown kinds") {
  Signal s{SignalKind::curvature, "x", 0.07};
  GateDecision a = signal_to_action(s);
  GateDecision b = signal_to_action(s);
  CHECK(a.action == b.action);
  CHECK(a.reason == b.reason);

  Signal unknown;
  unknown.kind = static_cast<SignalKind>(99);
  CHECK_THROWS_WITH_AS(signal_to_action(unknown),
                       doctest::Contains("unmapped-signal"), Error);
}

TEST_CASE("gate_action_name covers every action") {
  CHECK(std::string(gate_action_name(GateAction::parallel_ok)) == "parallel_ok");
  CHECK(std::string(gate_action_name(GateAction::fuse_ok)) == "fuse_ok");
  CHECK(std::string(gate_action_name(GateAction::sequentialize)) == "sequentialize");
  CHECK(std::string(gate_action_name(GateAction::add_verifiers)) == "add_verifiers");
  CHECK(std::string(gate_action_name(GateAction::fail_build)) == "fail_build");
  CHECK(std::string(gate_action_name(GateAction::accept)) == "accept");
}

TEST_CASE("reorder_counterexamples keeps strict exceedances, largest first") {
  std::vector<CommutatorRecord> records = {
      {"attn", "mlp", 0.05, std::nullopt, "b0"},
      {"attn", "norm", 0.31, std::nullopt, "b0"},
      {"mlp", "norm", 0.10, std::nullopt, "b0"},  // boundary: not a violation
      {"attn", "rope", 0.29, std::nullopt, "b1"},
  };
  std::vector<CounterExample> ce = reorder_counterexamples(records);
  REQUIRE(ce.size() == 2);
  CHECK(ce[0].module_a == "attn");
  CHECK(ce[0].module_b == "norm");
  CHECK(ce[0].delta == Approx(0.31));
  CHECK(ce[0].input_id == "b0");
  CHECK(ce[1].module_b == "rope");
  CHECK(ce[1].input_id == "b1");
}

TEST_CASE("reorder_counterexamples breaks delta ties by module ids") {
  std::vector<CommutatorRecord> records = {
      {"z1", "z2", 0.2, std::nullopt, "b"},
      {"a1", "a2", 0.2, std::nullopt, "b"},
  };
  std::vector<CounterExample> ce = reorder_counterexamples(records);
  REQUIRE(ce.size() == 2);
  CHECK(ce[0].module_a == "a1");
  CHECK(ce[1].module_a == "z1");
  CHECK(reorder_counterexamples({}).empty());
}

TEST_CASE("ci_gate passes identical healthy snapshots with exact report text") {
  MetricsSnapshot snap;
  snap.auc = 0.75;
  snap.variance_ratio = 0.5;
  GateReport report = ci_gate(snap, snap);
  CHECK(report.pass);
  REQUIRE(report.rules.size() == 2);
  CHECK(report.rules[0].rule == "variance_ratio");
  CHECK(report.rules[1].rule == "auc_drop");
  CHECK(report.text ==
        "rule=variance_ratio value=0.5 threshold=0.6 verdict=pass\n"
        "rule=auc_drop value=0 threshold=0.03 verdict=pass\n"
        "gate=pass\n");
}

TEST_CASE("ci_gate fails on an auc drop beyond the limit") {
  MetricsSnapshot prev;
  prev.auc = 0.875;
  prev.variance_ratio = 0.5;
  MetricsSnapshot cur = prev;
  cur.auc = 0.8125;
  GateReport report = ci_gate(cur, prev);
  CHECK_FALSE(report.pass);
  CHECK(report.rules[0].pass);
  CHECK_FALSE(report.rules[1].pass);
  CHECK(report.rules[1].value == Approx(0.0625));
  CHECK(report.text ==
        "rule=variance_ratio value=0.5 threshold=0.6 verdict=pass\n"
        "rule=auc_drop value=0.0625 threshold=0.03 verdict=fail\n"
        "gate=fail\n");
}

TEST_CASE("ci_gate auc boundaries") {
  MetricsSnapshot prev;
  prev.auc = kAucDropLimit;  // drop computes to exactly the limit
  MetricsSnapshot cur;
  cur.auc = 0.0;
  CHECK(ci_gate(cur, prev).pass);

  prev.auc = 0.75;
  cur.auc = 0.7265625;  // drop 0.0234375, inside the limit
  CHECK(ci_gate(cur, prev).pass);
  cur.auc = 0.71875;  // drop 0.03125
  CHECK_FALSE(ci_gate(cur, prev).pass);

  cur.auc = 0.8;  // improvement never trips the rule
  CHECK(ci_gate(cur, prev).pass);
}

TEST_CASE("ci_gate variance ratio rule is absolute") {
  MetricsSnapshot prev;
  prev.auc = 0.8;
  prev.variance_ratio = 0.5;
  MetricsSnapshot cur = prev;

  cur.variance_ratio = 0.59;
  CHECK(ci_gate(cur, prev).pass);
  cur.variance_ratio = 0.6;
  CHECK(ci_gate(cur, prev).pass);
  cur.variance_ratio = 0.7;
  cur.auc = 0.95;  // even with an auc gain the ratio rule fails the gate
  GateReport report = ci_gate(cur, prev);
  CHECK_FALSE(report.pass);
  CHECK_FALSE(report.rules[0].pass);
  CHECK(report.rules[1].pass);
}

TEST_CASE("ci_gate fails closed on non-finite values") {
  MetricsSnapshot prev;
  prev.auc = 0.8;
  prev.variance_ratio = 0.5;
  MetricsSnapshot cur = prev;
  cur.variance_ratio = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(ci_gate(cur, prev).pass);
}

TEST_CASE("ci_gate refuses mismatched snapshot schemas") {
  MetricsSnapshot a;
  MetricsSnapshot b;
  b.schema = 2;
  CHECK_THROWS_WITH_AS(ci_gate(a, b), doctest::Contains("schema-mismatch"), Error);
}

TEST_CASE("platt_calibrate fits a symmetric separable sample") {
  std::vector<double> scores = {-2.0, -1.0, 1.0, 2.0};
  std::vector<int> labels = {0, 0, 1, 1};
  PlattModel m = platt_calibrate(scores, labels);
  CHECK(m.slope > 0.0);
  CHECK(platt_apply(m, 0.0) == Approx(0.5).epsilon(1e-6));
  CHECK(platt_apply(m, -2.0) < platt_apply(m, -1.0));
  CHECK(platt_apply(m, -1.0) < platt_apply(m, 1.0));
  CHECK(platt_apply(m, 1.0) < platt_apply(m, 2.0));
  for (double s : {-10.0, -2.0, 0.0, 2.0, 10.0}) {
    double p = platt_apply(m, s);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
  CHECK(platt_apply(m, 10.0) > 0.9);

  std::vector<int> flipped = {1, 1, 0, 0};
  CHECK(platt_calibrate(scores, flipped).slope < 0.0);
}

TEST_CASE("platt_calibrate reaches the smoothed-target optimum") {
  SeededRng rng(3);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 60; ++i) {
    int y = i % 2;
    scores.push_back((y ? 0.8 : -0.8) + rng.normal());
    labels.push_back(y);
  }
  PlattModel m = platt_calibrate(scores, labels);

  double np = 30.0;
  double nn = 30.0;
  double hi = (np + 1.0) / (np + 2.0);
  double lo = 1.0 / (nn + 2.0);
  auto objective = [&](double a, double b) {
    double f = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      double t = labels[i] ? hi : lo;
      double z = a * scores[i] + b;
      f += z >= 0.0 ? (1.0 - t) * z + std::log1p(std::exp(-z))
                    : -t * z + std::log1p(std::exp(z));
    }
    return f;
  };
  double fitted = objective(m.slope, m.intercept);
  CHECK(fitted <= objective(0.0, 0.0) + 1e-9);
  CHECK(fitted <= objective(1.0, 0.0) + 1e-9);
  CHECK(fitted <= objective(m.slope + 0.05, m.intercept) + 1e-9);
  CHECK(fitted <= objective(m.slope, m.intercept - 0.05) + 1e-9);

  PlattModel again = platt_calibrate(scores, labels);
  CHECK(m.slope == again.slope);
  CHECK(m.intercept == again.intercept);
}

TEST_CASE("platt_calibrate stays finite on separable scores") {
  // without target smoothing this sample would push the slope to infinity
  std::vector<double> scores = {-3.0, -2.5, 2.5, 3.0};
  std::vector<int> labels = {0, 0, 1, 1};
  PlattModel m = platt_calibrate(scores, labels);
  CHECK(std::isfinite(m.slope));
  CHECK(std::isfinite(m.intercept));
  CHECK(platt_apply(m, 3.0) < 1.0);
  CHECK(platt_apply(m, 3.0) > 0.5);
}

TEST_CASE("platt_calibrate input validation") {
  CHECK_THROWS_WITH_AS(platt_calibrate({0.1}, {1, 0}),
                       doctest::Contains("invalid-dimension"), Error);
  CHECK_THROWS_WITH_AS(platt_calibrate({}, {}),
                       doctest::Contains("insufficient-data"), Error);
  CHECK_THROWS_WITH_AS(platt_calibrate({0.1, 0.2}, {1, 1}),
                       doctest::Contains("degenerate-labels"), Error);
  CHECK_THROWS_WITH_AS(platt_calibrate({0.1, 0.2}, {0, 2}),
                       doctest::Contains("invalid-argument"), Error);
  double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(platt_calibrate({nan, 0.2}, {0, 1}),
                       doctest::Contains("invalid-argument"), Error);
  CHECK_THROWS_WITH_AS(platt_apply({1.0, 0.0}, nan),
                       doctest::Contains("invalid-argument"), Error);
}
