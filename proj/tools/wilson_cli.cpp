// Command-line front end: suite runs, single experiments, transcript
// scoring, and the CI gate. All heavy lifting lives in the library; this
// file only maps flags onto SuiteConfig and prints summaries.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "wilson/gate.hpp"
#include "wilson/orbits.hpp"
#include "wilson/suite.hpp"
#include "wilson/svg.hpp"

namespace {

using nlohmann::json;

struct SuiteFlags {
  std::string config;
  std::uint64_t seed = 0;
  int probes = 6;
  int targets = 8;
  int neighbors = 6;
  double explore_fraction = 0.2;
  double scan_quantile = 0.95;
  std::string probe_kind = "rademacher";
  double tau_kappa = 0.12;
  double tau_delta = 0.10;
  double tol = 0.02;
  std::string out;
  int workers = 1;
  std::string experiments = "all";
  std::string seeds;
  int inputs = 48;
  int input_length = 12;
  int orbit_size = 6;
  int null_permutations = 100;
  int resamples = 1000;
  std::map<std::string, CLI::Option*> opt;
};

void add_suite_flags(CLI::App* cmd, SuiteFlags& f, bool with_experiments) {
  f.opt["config"] =
      cmd->add_option("--config", f.config, "flat key=value config file");
  f.opt["seed"] = cmd->add_option("--seed", f.seed, "master seed");
  f.opt["probes"] =
      cmd->add_option("--probes", f.probes, "probes per confirmed loop (r)");
  f.opt["targets"] =
      cmd->add_option("--targets", f.targets, "target positions per layer (k)");
  f.opt["neighbors"] =
      cmd->add_option("--neighbors", f.neighbors, "sources per target (m)");
  f.opt["explore-fraction"] = cmd->add_option(
      "--explore-fraction", f.explore_fraction, "extra uniform sources, fraction of m");
  f.opt["scan-quantile"] = cmd->add_option("--scan-quantile", f.scan_quantile,
                                           "scan scores above this graduate");
  f.opt["probe-kind"] = cmd->add_option("--probe-kind", f.probe_kind,
                                        "rademacher or gaussian");
  f.opt["tau-kappa"] =
      cmd->add_option("--tau-kappa", f.tau_kappa, "curvature threshold");
  f.opt["tau-delta"] =
      cmd->add_option("--tau-delta", f.tau_delta, "commutator threshold");
  f.opt["tol"] = cmd->add_option("--tol", f.tol, "orbit decision tolerance");
  f.opt["out"] = cmd->add_option("--out", f.out,
                                 "output directory (or env WILSON_OUT)");
  f.opt["workers"] = cmd->add_option("--workers", f.workers, "worker threads");
  if (with_experiments) {
    f.opt["experiments"] = cmd->add_option(
        "--experiments", f.experiments, "all, none, or comma list like e1,e5");
  }
  f.opt["seeds"] =
      cmd->add_option("--seeds", f.seeds, "gauge ensemble seeds, comma list");
  f.opt["inputs"] = cmd->add_option("--inputs", f.inputs, "corpus size");
  f.opt["input-length"] =
      cmd->add_option("--input-length", f.input_length, "tokens per input");
  f.opt["orbit-size"] =
      cmd->add_option("--orbit-size", f.orbit_size, "variants per orbit");
  f.opt["null-permutations"] = cmd->add_option(
      "--null-permutations", f.null_permutations, "permuted-score null draws");
  f.opt["resamples"] =
      cmd->add_option("--resamples", f.resamples, "bootstrap resamples");
}

wilson::SuiteConfig build_config(const SuiteFlags& f,
                                 const std::string& forced_experiment) {
  wilson::SuiteConfig cfg;
  auto passed = [&f](const char* name) {
    auto it = f.opt.find(name);
    return it != f.opt.end() && it->second->count() > 0;
  };
  bool out_from_config = false;
  if (passed("config")) {
    const auto kv = wilson::parse_config_file(f.config);
    for (const auto& [k, v] : kv)
      if (k == "out") out_from_config = true;
    wilson::apply_config(cfg, kv);
  }
  if (!out_from_config) {
    if (const char* env = std::getenv("WILSON_OUT"); env && *env)
      cfg.out_dir = env;
  }
  if (passed("seed")) cfg.seed = f.seed;
  if (passed("probes")) cfg.knobs.probes = f.probes;
  if (passed("targets")) cfg.knobs.targets = f.targets;
  if (passed("neighbors")) cfg.knobs.neighbors = f.neighbors;
  if (passed("explore-fraction")) cfg.knobs.explore_fraction = f.explore_fraction;
  if (passed("scan-quantile")) cfg.knobs.scan_quantile = f.scan_quantile;
  if (passed("probe-kind"))
    cfg.knobs.probe_kind = wilson::probe_kind_from(f.probe_kind);
  if (passed("tau-kappa")) cfg.thresholds.tau_kappa = f.tau_kappa;
  if (passed("tau-delta")) cfg.thresholds.tau_delta = f.tau_delta;
  if (passed("tol")) cfg.thresholds.tol_delta_orbit = f.tol;
  if (passed("out")) cfg.out_dir = f.out;
  if (passed("workers")) cfg.workers = f.workers;
  if (passed("experiments"))
    cfg.experiments = wilson::parse_experiment_list(f.experiments);
  if (passed("seeds")) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(f.seeds);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) seeds.push_back(std::stoull(item));
    cfg.gauge_seeds = seeds;
  }
  if (passed("inputs")) cfg.n_inputs = f.inputs;
  if (passed("input-length")) cfg.input_length = f.input_length;
  if (passed("orbit-size")) cfg.orbit_size = f.orbit_size;
  if (passed("null-permutations")) cfg.null_permutations = f.null_permutations;
  if (passed("resamples")) cfg.bootstrap.resamples = f.resamples;
  if (!forced_experiment.empty()) cfg.experiments = {forced_experiment};
  return cfg;
}

int run_and_report(const wilson::SuiteConfig& cfg) {
  const wilson::SuiteSummary s = wilson::run_suite(cfg);
  for (const auto& st : s.experiments) {
    if (st.ok)
      std::printf("%s  ok      %.3fs\n", st.name.c_str(), st.seconds);
    else
      std::printf("%s  FAILED  %.3fs  %s\n", st.name.c_str(), st.seconds,
                  st.error.c_str());
  }
  if (s.ir)
    std::printf("  ir macro %.4f [%.4f, %.4f]  micro %.4f\n", s.ir->macro,
                s.ir->macro_ci.lo, s.ir->macro_ci.hi, s.ir->micro);
  if (s.variance_ratio)
    std::printf("  gauge variance ratio (worst layer) %.4f\n", *s.variance_ratio);
  if (s.drift && !s.drift->degenerate)
    std::printf("  delta/drift spearman %.4f\n", s.drift->spearman);
  if (s.area_under_drift)
    std::printf("  area under rope drift %.6f\n", *s.area_under_drift);
  if (s.loops_scanned)
    std::printf("  loops scanned %lld confirmed %lld\n",
                static_cast<long long>(*s.loops_scanned),
                static_cast<long long>(*s.loops_confirmed));
  if (s.prediction)
    std::printf("  auc %.4f ap %.4f null %.4f\n", s.prediction->auc,
                s.prediction->ap, s.null_auc_mean ? *s.null_auc_mean : 0.0);
  if (s.prediction_note) std::printf("  e6: %s\n", s.prediction_note->c_str());
  if (s.overhead)
    std::printf("  overhead scan %.1f%% confirm %.1f%% total %.1f%%\n",
                s.overhead->scan_percent, s.overhead->confirm_percent,
                s.overhead->total_percent);
  std::printf("artifacts in %s\n", s.out_dir.c_str());
  return s.all_ok ? 0 : 1;
}

std::string opt_num(const std::optional<double>& v) {
  return v ? wilson::format_double(*v) : "";
}

int score_blackbox(const std::string& input, const std::string& out,
                   const std::string& drift_out) {
  std::ifstream f(input, std::ios::binary);
  if (!f) {
    std::fprintf(stderr, "error: cannot read %s\n", input.c_str());
    return 2;
  }
  const wilson::BlackboxReport report = wilson::blackbox_scores(f);
  std::ostringstream scores;
  scores << "query,model,majority,ir,si,pdr,od,n_paraphrase,n_pathway,n_ordering\n";
  for (const auto& s : report.scores) {
    scores << s.query << "," << s.model << ","
           << (s.majority ? *s.majority : std::string()) << "," << opt_num(s.ir)
           << "," << opt_num(s.si) << "," << opt_num(s.pdr) << ","
           << (s.od ? std::to_string(*s.od) : std::string()) << ","
           << s.n_paraphrase << "," << s.n_pathway << "," << s.n_ordering
           << "\n";
  }
  if (out.empty()) {
    std::fputs(scores.str().c_str(), stdout);
  } else {
    wilson::write_text_file(out, scores.str());
    std::printf("scores written to %s\n", out.c_str());
  }
  if (report.has_model_column) {
    std::ostringstream drift;
    drift << "query,model_a,model_b,differs\n";
    for (const auto& d : report.drift)
      drift << d.query << "," << d.model_a << "," << d.model_b << ","
            << (d.differs ? 1 : 0) << "\n";
    if (drift_out.empty()) {
      std::fputs("\n", stdout);
      std::fputs(drift.str().c_str(), stdout);
    } else {
      wilson::write_text_file(drift_out, drift.str());
      std::printf("drift written to %s\n", drift_out.c_str());
    }
  }
  return 0;
}

wilson::MetricsSnapshot snapshot_from_metrics(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) wilson::raise("io-error", "cannot read metrics file: " + path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    wilson::raise("parse-error", std::string("metrics file: ") + e.what());
  }
  wilson::MetricsSnapshot snap;
  snap.schema = j.value("schema", 1);
  if (!j.contains("e6") || !j["e6"].contains("auc"))
    wilson::raise("insufficient-data",
                  "metrics file lacks e6.auc (run e6 first): " + path);
  if (!j.contains("e2") || !j["e2"].contains("variance_ratio"))
    wilson::raise("insufficient-data",
                  "metrics file lacks e2.variance_ratio (run e2 first): " + path);
  // Non-numeric values (e.g. an infinite ratio serialized as null) become
  // NaN so the gate fails closed instead of erroring out.
  auto num = [](const json& v) {
    return v.is_number() ? v.get<double>()
                         : std::numeric_limits<double>::quiet_NaN();
  };
  snap.auc = num(j["e6"]["auc"]);
  snap.variance_ratio = num(j["e2"]["variance_ratio"]);
  return snap;
}

int run_gate(const std::string& metrics_path, const std::string& previous_path,
             const std::string& report_path) {
  const wilson::MetricsSnapshot current = snapshot_from_metrics(metrics_path);
  const wilson::MetricsSnapshot previous =
      previous_path.empty() ? current : snapshot_from_metrics(previous_path);
  const wilson::GateReport report = wilson::ci_gate(current, previous);
  std::fputs(report.text.c_str(), stdout);
  if (!report_path.empty()) wilson::write_text_file(report_path, report.text);
  return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"loop-curvature diagnostics on a built-in toy transformer"};
  app.require_subcommand(1);

  SuiteFlags run_flags;
  CLI::App* run_cmd = app.add_subcommand("run", "run the experiment suite");
  add_suite_flags(run_cmd, run_flags, true);

  std::vector<SuiteFlags> exp_flags(7);
  std::vector<CLI::App*> exp_cmds;
  const char* exp_help[] = {
      "orbit invariance ratios -> ir.csv",
      "cross-seed gauge stability -> gauge_stats.csv",
      "commutator maps and reorder drift -> commutator.csv",
      "rotary phase-offset drift -> rope_drift.csv",
      "loop curvature scan/confirm -> holonomy.csv",
      "curvature as an invariance-break score -> roc.svg",
      "wall-clock attribution -> overhead.csv"};
  for (int k = 0; k < 7; ++k) {
    const std::string name = "e" + std::to_string(k + 1);
    CLI::App* cmd = app.add_subcommand(name, exp_help[k]);
    add_suite_flags(cmd, exp_flags[k], false);
    exp_cmds.push_back(cmd);
  }

  std::string bb_input, bb_out, bb_drift;
  CLI::App* bb_cmd = app.add_subcommand(
      "score-blackbox", "score a transcript CSV (paraphrase/pathway/ordering)");
  bb_cmd->add_option("input", bb_input, "transcript CSV path")->required();
  bb_cmd->add_option("--out", bb_out, "write per-query scores CSV here");
  bb_cmd->add_option("--drift", bb_drift, "write cross-model drift CSV here");

  std::string gate_metrics, gate_previous, gate_report;
  CLI::App* gate_cmd =
      app.add_subcommand("gate", "CI gate over existing metrics.json files");
  gate_cmd->add_option("--metrics", gate_metrics, "current metrics.json")
      ->required();
  gate_cmd->add_option("--previous", gate_previous,
                       "baseline metrics.json (default: current)");
  gate_cmd->add_option("--out", gate_report, "write the gate report here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return run_and_report(build_config(run_flags, ""));
    for (int k = 0; k < 7; ++k) {
      if (exp_cmds[k]->parsed())
        return run_and_report(
            build_config(exp_flags[k], "e" + std::to_string(k + 1)));
    }
    if (bb_cmd->parsed()) return score_blackbox(bb_input, bb_out, bb_drift);
    if (gate_cmd->parsed()) return run_gate(gate_metrics, gate_previous, gate_report);
  } catch (const wilson::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
