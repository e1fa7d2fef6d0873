#pragma once

// Diagnostic suite runner: seven experiments on the built-in toy model,
// emitting append-only CSV artifacts, metrics.json, and SVG plots into one
// output directory. The manifest is written before any data file; every CSV
// value column is a pure function of the config (timestamps and wall-clock
// timings are the only run-varying outputs).
//
//   e1  orbit invariance ratios                -> ir.csv
//   e2  cross-seed gauge stability             -> gauge_stats.csv
//   e3  commutator maps + reorder drift        -> commutator.csv, heatmap svg
//   e4  rotary phase-offset drift              -> rope_drift.csv
//   e5  loop curvature scan/confirm            -> holonomy.csv, scatter svg
//   e6  curvature -> invariance-break scoring  -> roc svg, metrics
//   e7  wall-clock attribution vs plain runs   -> overhead.csv
//
// Experiments share one deterministic input corpus and child-seeded RNG
// streams, so any subset produces byte-identical value columns. A failing
// experiment is recorded and skipped past, never fatal to the rest.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wilson/artifacts.hpp"
#include "wilson/commutator.hpp"
#include "wilson/curvature.hpp"
#include "wilson/gate.hpp"
#include "wilson/model.hpp"
#include "wilson/orbits.hpp"
#include "wilson/stats.hpp"

namespace wilson {

const std::vector<std::string>& all_experiments();  // {"e1", ..., "e7"}

struct SuiteConfig {
  ModelSpec spec;
  std::uint64_t seed = 0;
  SamplingKnobs knobs;
  Thresholds thresholds;
  std::vector<std::string> experiments = all_experiments();
  std::string out_dir = "out";
  std::vector<std::uint64_t> gauge_seeds = {0, 1, 2};  // e2 model ensemble
  BootstrapConfig bootstrap;
  int workers = 1;
  int n_inputs = 48;       // base corpus size (> d_model keeps probes honest)
  Index input_length = 12; // tokens per sampled input (<= spec.max_t)
  int orbit_size = 6;      // variants per orbit
  int null_permutations = 100;
};

struct ExperimentStatus {
  std::string name;
  bool ok = true;
  std::string error;
  double seconds = 0;
};

struct OverheadTimings {
  double baseline_seconds = 0;  // one plain forward pass over the corpus
  double scan_seconds = 0;
  double confirm_seconds = 0;
  double total_seconds = 0;  // measured around the whole scoring pass;
                             // 0 means "use scan + confirm"
};

struct OverheadReport {
  double scan_percent = 0;
  double confirm_percent = 0;
  double total_percent = 0;
};

// Percentages relative to the plain-forward baseline over the same inputs.
OverheadReport report_overhead(const OverheadTimings& t);

const CsvSchema& overhead_schema();    // phase,seconds,percent,...
const CsvSchema& rope_drift_schema();  // layer,offset,distance,...

// The three-bar rows (scan, confirm, total) in artifact cell form.
std::vector<CsvCells> overhead_cells(const OverheadTimings& t,
                                     const OverheadReport& r,
                                     const RunContext& ctx);

struct SuiteSummary {
  std::vector<ExperimentStatus> experiments;
  bool all_ok = true;
  std::string out_dir;
  std::string model_hash;

  // Filled by the experiment that computes them; absent when not run or
  // failed.
  std::optional<IrAggregates> ir;                // e1
  std::optional<double> variance_ratio;          // e2, worst layer
  std::optional<DriftCorrelation> drift;         // e3
  std::optional<double> area_under_drift;        // e4
  std::optional<Index> loops_scanned;            // e5
  std::optional<Index> loops_confirmed;          // e5
  std::optional<BinaryMetrics> prediction;       // e6
  std::optional<BootstrapCi> prediction_auc_ci;  // e6
  std::optional<double> null_auc_mean;           // e6 permuted-score null
  std::optional<double> random_init_auc;         // e6 re-init baseline
  std::optional<double> brier;                   // e6
  std::optional<double> ece;                     // e6
  std::optional<std::string> prediction_note;    // e6 degenerate-label note
  std::optional<OverheadTimings> timings;        // e7
  std::optional<OverheadReport> overhead;        // e7
};

// Runs the requested experiments in e1..e7 order. Writes manifest.json
// first (an existing manifest must describe the same run configuration),
// then per-experiment artifacts, then metrics.json. Any experiment error is
// caught, recorded in the summary and metrics.json, and the remaining
// experiments still run; all_ok reflects the outcome.
SuiteSummary run_suite(const SuiteConfig& cfg);

// Flat key=value config (one per line, '#' comments). Keys carry the CLI
// flag names: seed, probes, targets, neighbors, explore-fraction,
// scan-quantile, probe-kind, tau-kappa, tau-delta, tol, out, workers,
// experiments, seeds, inputs, input-length, orbit-size, null-permutations,
// resamples.
std::vector<std::pair<std::string, std::string>> parse_config_text(
    const std::string& text);
std::vector<std::pair<std::string, std::string>> parse_config_file(
    const std::string& path);
void apply_config(SuiteConfig& cfg,
                  const std::vector<std::pair<std::string, std::string>>& kv);

// "all", "none", or a comma list like "e1,e3,e5" (case-insensitive).
std::vector<std::string> parse_experiment_list(const std::string& value);

}  // namespace wilson
