#include "wilson/suite.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "wilson/gauge.hpp"
#include "wilson/svg.hpp"
#include "wilson/symmetry.hpp"

namespace wilson {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& all_experiments() {
  static const std::vector<std::string> names = {"e1", "e2", "e3", "e4",
                                                 "e5", "e6", "e7"};
  return names;
}

OverheadReport report_overhead(const OverheadTimings& t) {
  if (!std::isfinite(t.baseline_seconds) || t.baseline_seconds <= 0.0)
    raise("measurement-error", "report_overhead: baseline must be positive");
  const double phases[] = {t.scan_seconds, t.confirm_seconds, t.total_seconds};
  for (double v : phases) {
    if (!std::isfinite(v) || v < 0.0)
      raise("measurement-error", "report_overhead: phase times must be >= 0");
  }
  OverheadReport r;
  r.scan_percent = 100.0 * t.scan_seconds / t.baseline_seconds;
  r.confirm_percent = 100.0 * t.confirm_seconds / t.baseline_seconds;
  const double total =
      t.total_seconds > 0.0 ? t.total_seconds : t.scan_seconds + t.confirm_seconds;
  r.total_percent = 100.0 * total / t.baseline_seconds;
  return r;
}

const CsvSchema& overhead_schema() {
  static const CsvSchema schema{
      "overhead",
      {"phase", "seconds", "percent", "model", "seed", "ts", "schema"}};
  return schema;
}

const CsvSchema& rope_drift_schema() {
  static const CsvSchema schema{
      "rope_drift",
      {"layer", "offset", "distance", "model", "seed", "ts", "schema"}};
  return schema;
}

std::vector<CsvCells> overhead_cells(const OverheadTimings& t,
                                     const OverheadReport& r,
                                     const RunContext& ctx) {
  const double total =
      t.total_seconds > 0.0 ? t.total_seconds : t.scan_seconds + t.confirm_seconds;
  auto row = [&ctx](const char* phase, double seconds, double percent) {
    return CsvCells{phase,
                    format_double(seconds),
                    format_double(percent),
                    ctx.model,
                    std::to_string(ctx.seed),
                    ctx.ts,
                    std::to_string(ctx.schema)};
  };
  return {row("scan", t.scan_seconds, r.scan_percent),
          row("confirm", t.confirm_seconds, r.confirm_percent),
          row("total", total, r.total_percent)};
}

std::vector<std::string> parse_experiment_list(const std::string& value) {
  std::string lower;
  for (char c : value)
    lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "all") return all_experiments();
  if (lower.empty() || lower == "none") return {};
  std::set<std::string> requested;
  std::stringstream ss(lower);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
    if (item.empty()) continue;
    const auto& all = all_experiments();
    if (std::find(all.begin(), all.end(), item) == all.end())
      raise("invalid-argument", "unknown experiment name: " + item);
    requested.insert(item);
  }
  std::vector<std::string> out;
  for (const auto& name : all_experiments())
    if (requested.count(name)) out.push_back(name);
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_config_text(
    const std::string& text) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    const char* ws = " \t\r";
    const auto a = s.find_first_not_of(ws);
    if (a == std::string::npos) return std::string();
    const auto b = s.find_last_not_of(ws);
    return s.substr(a, b - a + 1);
  };
  while (std::getline(ss, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      raise("parse-error",
            "config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      raise("parse-error",
            "config line " + std::to_string(line_no) + ": empty key");
    kv.emplace_back(key, value);
  }
  return kv;
}

std::vector<std::pair<std::string, std::string>> parse_config_file(
    const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise("io-error", "cannot read config file: " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str());
}

namespace {

double parse_double_value(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    raise("invalid-argument", "config key '" + key + "': bad number '" + value + "'");
  }
}

int parse_int_value(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    raise("invalid-argument", "config key '" + key + "': bad integer '" + value + "'");
  }
}

std::uint64_t parse_u64_value(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    raise("invalid-argument", "config key '" + key + "': bad integer '" + value + "'");
  }
}

std::vector<std::uint64_t> parse_u64_list(const std::string& key,
                                          const std::string& value) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_u64_value(key, item));
  }
  if (out.empty())
    raise("invalid-argument", "config key '" + key + "': empty list");
  return out;
}

}  // namespace

void apply_config(SuiteConfig& cfg,
                  const std::vector<std::pair<std::string, std::string>>& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "seed") cfg.seed = parse_u64_value(key, value);
    else if (key == "probes") cfg.knobs.probes = parse_int_value(key, value);
    else if (key == "targets") cfg.knobs.targets = parse_int_value(key, value);
    else if (key == "neighbors") cfg.knobs.neighbors = parse_int_value(key, value);
    else if (key == "explore-fraction")
      cfg.knobs.explore_fraction = parse_double_value(key, value);
    else if (key == "scan-quantile")
      cfg.knobs.scan_quantile = parse_double_value(key, value);
    else if (key == "probe-kind") cfg.knobs.probe_kind = probe_kind_from(value);
    else if (key == "tau-kappa")
      cfg.thresholds.tau_kappa = parse_double_value(key, value);
    else if (key == "tau-delta")
      cfg.thresholds.tau_delta = parse_double_value(key, value);
    else if (key == "tol")
      cfg.thresholds.tol_delta_orbit = parse_double_value(key, value);
    else if (key == "out") cfg.out_dir = value;
    else if (key == "workers") cfg.workers = parse_int_value(key, value);
    else if (key == "experiments") cfg.experiments = parse_experiment_list(value);
    else if (key == "seeds") cfg.gauge_seeds = parse_u64_list(key, value);
    else if (key == "inputs") cfg.n_inputs = parse_int_value(key, value);
    else if (key == "input-length")
      cfg.input_length = parse_int_value(key, value);
    else if (key == "orbit-size") cfg.orbit_size = parse_int_value(key, value);
    else if (key == "null-permutations")
      cfg.null_permutations = parse_int_value(key, value);
    else if (key == "resamples")
      cfg.bootstrap.resamples = parse_int_value(key, value);
    else
      raise("invalid-argument", "unknown config key: " + key);
  }
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Child-stream tags; the low 32 bits carry the per-item index, so streams
// never collide across purposes.
constexpr std::uint64_t kInputStream = 1;
constexpr std::uint64_t kOrbitStream = 2;
constexpr std::uint64_t kSelectStream = 3;
constexpr std::uint64_t kScanStream = 4;
constexpr std::uint64_t kNullPermStream = 5;
constexpr std::uint64_t kReinitSelectStream = 6;
constexpr std::uint64_t kReinitScanStream = 7;
constexpr std::uint64_t kCalibStream = 8;

void validate_config(const SuiteConfig& cfg) {
  cfg.spec.validate();
  if (cfg.n_inputs < 1) raise("invalid-argument", "need at least one input");
  if (cfg.input_length < 5)
    raise("invalid-argument", "input length must be at least 5");
  if (cfg.input_length > cfg.spec.max_t)
    raise("invalid-argument", "input length exceeds the model context");
  if (cfg.orbit_size < 1) raise("invalid-argument", "orbit size must be >= 1");
  if (cfg.workers < 1) raise("invalid-argument", "workers must be >= 1");
  if (cfg.null_permutations < 1)
    raise("invalid-argument", "need at least one null permutation");
  if (cfg.knobs.probes < 1 || cfg.knobs.targets < 1 || cfg.knobs.neighbors < 1)
    raise("invalid-argument", "sampling knobs must be >= 1");
  if (!(cfg.knobs.scan_quantile >= 0.0 && cfg.knobs.scan_quantile <= 1.0))
    raise("invalid-argument", "scan quantile must lie in [0, 1]");
  if (cfg.knobs.explore_fraction < 0.0)
    raise("invalid-argument", "explore fraction must be >= 0");
  const double th[] = {cfg.thresholds.tau_kappa, cfg.thresholds.tau_delta,
                       cfg.thresholds.tol_delta_orbit};
  for (double v : th)
    if (!std::isfinite(v) || v < 0.0)
      raise("invalid-argument", "thresholds must be finite and >= 0");
  for (const auto& name : cfg.experiments) {
    const auto& all = all_experiments();
    if (std::find(all.begin(), all.end(), name) == all.end())
      raise("invalid-argument", "unknown experiment name: " + name);
  }
}

bool manifest_matches(const RunManifest& a, const RunManifest& b) {
  return a.model_hash == b.model_hash && a.seeds == b.seeds &&
         a.knobs.probes == b.knobs.probes && a.knobs.targets == b.knobs.targets &&
         a.knobs.neighbors == b.knobs.neighbors &&
         a.knobs.explore_fraction == b.knobs.explore_fraction &&
         a.knobs.scan_quantile == b.knobs.scan_quantile &&
         a.knobs.probe_kind == b.knobs.probe_kind &&
         a.tau_kappa == b.tau_kappa && a.tau_delta == b.tau_delta &&
         a.tol_delta == b.tol_delta && a.schema == b.schema;
}

struct Runner {
  const SuiteConfig& cfg;
  SuiteSummary summary;
  ModelWeights<double> weights;
  RunContext ctx;
  fs::path dir;
  json metrics;

  bool have_inputs = false;
  std::vector<std::vector<int>> inputs;
  std::vector<int> input_labels;

  bool have_records = false;
  std::vector<IrRecord> records;

  bool have_scan = false;
  bool scan_rows_kept = false;
  std::vector<KappaAggregate> aggregates;
  std::vector<LoopScore> scan_rows;
  std::vector<LoopScore> confirmed_rows;
  std::vector<std::string> scan_warnings;
  OverheadTimings timings;
  Index loops_scanned = 0;
  Index loops_confirmed = 0;

  explicit Runner(const SuiteConfig& c)
      : cfg(c), weights(init_model<double>(c.spec, c.seed)) {
    summary.out_dir = cfg.out_dir;
    summary.model_hash = model_hash(weights);
    ctx.model = model_id(weights);
    ctx.seed = cfg.seed;
    ctx.ts = now_iso8601_utc();
    dir = fs::path(cfg.out_dir);
  }

  SeededRng stream_rng(std::uint64_t tag, std::uint64_t i) const {
    return SeededRng(cfg.seed).child((tag << 32) | i);
  }

  std::string path(const char* name) const { return (dir / name).string(); }

  void prepare() {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) raise("io-error", "cannot create output dir: " + dir.string());
    RunManifest m;
    m.model_hash = summary.model_hash;
    m.seeds.push_back(cfg.seed);
    for (auto s : cfg.gauge_seeds) m.seeds.push_back(s);
    m.knobs = cfg.knobs;
    m.tau_kappa = cfg.thresholds.tau_kappa;
    m.tau_delta = cfg.thresholds.tau_delta;
    m.tol_delta = cfg.thresholds.tol_delta_orbit;
    m.schema = kArtifactSchemaVersion;
    m.ts = ctx.ts;
    const std::string manifest_path = path("manifest.json");
    if (fs::exists(manifest_path)) {
      // Appending into a directory is only safe when it was produced by the
      // same configuration; anything else would interleave evidence.
      const RunManifest old = read_manifest(manifest_path);
      if (!manifest_matches(old, m))
        raise("invalid-argument",
              "output dir holds a manifest from a different configuration: " +
                  manifest_path);
    } else {
      write_manifest(manifest_path, m);
    }
    // A later run into the same series may execute a subset of experiments;
    // entries it does not recompute must survive, or a follow-up `gate` would
    // see a summary with holes.
    const std::string metrics_path = path("metrics.json");
    if (fs::exists(metrics_path)) {
      std::ifstream f(metrics_path, std::ios::binary);
      json old = json::parse(f, nullptr, false);
      if (old.is_discarded() || !old.is_object())
        raise("parse-error",
              "existing metrics.json is not valid JSON (delete it to restart "
              "the series): " +
                  metrics_path);
      if (old.contains("schema") && old["schema"] != kArtifactSchemaVersion)
        raise("schema-mismatch",
              "existing metrics.json was written under another schema: " +
                  metrics_path);
      metrics = std::move(old);
    }
    metrics["schema"] = kArtifactSchemaVersion;
    metrics["ts"] = ctx.ts;
    metrics["model"] = ctx.model;
    metrics["model_hash"] = summary.model_hash;
    metrics["seed"] = cfg.seed;
  }

  void ensure_inputs() {
    if (have_inputs) return;
    inputs.reserve(cfg.n_inputs);
    input_labels.reserve(cfg.n_inputs);
    for (int i = 0; i < cfg.n_inputs; ++i) {
      SeededRng rng = stream_rng(kInputStream, static_cast<std::uint64_t>(i));
      inputs.push_back(sample_task_input(cfg.input_length, rng));
      input_labels.push_back(task_label(inputs.back()));
    }
    have_inputs = true;
  }

  void ensure_records() {
    if (have_records) return;
    ensure_inputs();
    std::vector<Orbit> orbits;
    orbits.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const TransformKind kind = (i % 2 == 0) ? TransformKind::alpha_rename
                                              : TransformKind::algebraic_rewrite;
      SeededRng rng = stream_rng(kOrbitStream, i);
      orbits.push_back(generate_orbit(inputs[i], kind, cfg.orbit_size, rng));
    }
    records = ir_records(weights, orbits, cfg.thresholds.tol_delta_orbit,
                         cfg.workers);
    have_records = true;
  }

  void score_corpus(const ModelWeights<double>& w, std::uint64_t select_tag,
                    std::uint64_t scan_tag, bool keep_rows,
                    std::vector<KappaAggregate>& out_aggregates,
                    OverheadTimings* out_timings) {
    out_aggregates.resize(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const ActivationTrace<double> trace = forward(w, inputs[i]);
      SeededRng select_rng = stream_rng(select_tag, i);
      const Clock::time_point t0 = Clock::now();
      const SelectedLoops sel = select_loops(trace, cfg.knobs, select_rng);
      const ScanConfirmResult r =
          scan_then_confirm(w, trace, sel.loops, cfg.knobs, stream_rng(scan_tag, i),
                            "in" + std::to_string(i), cfg.workers);
      const double elapsed = seconds_since(t0);
      if (out_timings) {
        out_timings->total_seconds += elapsed;
        out_timings->scan_seconds += r.scan_seconds;
        out_timings->confirm_seconds += r.confirm_seconds;
      }
      out_aggregates[i] = aggregate_kappa(r.scan, r.confirmed);
      if (keep_rows) {
        scan_rows.insert(scan_rows.end(), r.scan.begin(), r.scan.end());
        confirmed_rows.insert(confirmed_rows.end(), r.confirmed.begin(),
                              r.confirmed.end());
      }
      loops_scanned += static_cast<Index>(r.scan.size());
      loops_confirmed += static_cast<Index>(r.confirmed.size());
      for (const auto& wmsg : sel.warnings) {
        if (std::find(scan_warnings.begin(), scan_warnings.end(), wmsg) ==
            scan_warnings.end())
          scan_warnings.push_back(wmsg);
      }
    }
  }

  void ensure_scan(bool keep_rows) {
    if (have_scan) return;  // first computation fixes row retention
    ensure_inputs();
    scan_rows_kept = keep_rows;
    score_corpus(weights, kSelectStream, kScanStream, keep_rows, aggregates,
                 &timings);
    have_scan = true;
  }

  void e1() {
    ensure_records();
    write_ir(path("ir.csv"), records, ctx);
    const IrAggregates agg = ir_aggregates(records, cfg.bootstrap);
    summary.ir = agg;
    int failures = 0;
    for (const auto& r : records) failures += r.label;
    metrics["e1"] = {{"macro", agg.macro},
                     {"macro_lo", agg.macro_ci.lo},
                     {"macro_hi", agg.macro_ci.hi},
                     {"micro", agg.micro},
                     {"micro_lo", agg.micro_ci.lo},
                     {"micro_hi", agg.micro_ci.hi},
                     {"n_inputs", records.size()},
                     {"n_failures", failures},
                     {"tol", cfg.thresholds.tol_delta_orbit}};
  }

  void e2() {
    ensure_inputs();
    if (cfg.gauge_seeds.size() < 2)
      raise("insufficient-seeds", "cross-seed stability needs >= 2 seeds");
    const int n_layers = cfg.spec.n_layers;
    const int n_seeds = static_cast<int>(cfg.gauge_seeds.size());
    const Index d = cfg.spec.d_model;
    // runs_by_layer[l][s]: seed s's features entering layer l+1, one row per
    // corpus input (final position of the residual stream).
    std::vector<std::vector<Matd>> runs_by_layer(
        n_layers, std::vector<Matd>(n_seeds, Matd(inputs.size(), d)));
    std::vector<int> seed_ids;
    for (int s = 0; s < n_seeds; ++s) {
      seed_ids.push_back(static_cast<int>(cfg.gauge_seeds[s]));
      const ModelWeights<double> w_s =
          init_model<double>(cfg.spec, cfg.gauge_seeds[s]);
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        const ActivationTrace<double> trace = forward(w_s, inputs[i]);
        const Index last = static_cast<Index>(inputs[i].size()) - 1;
        for (int l = 0; l < n_layers; ++l)
          runs_by_layer[l][s].row(static_cast<Index>(i)) =
              trace.h[l + 1].row(last);
      }
    }
    double worst_ratio = 0.0;
    json per_layer = json::array();
    for (int l = 0; l < n_layers; ++l) {
      const GaugeStabilityReport report =
          gauge_stability_report(runs_by_layer[l], input_labels, l + 1, seed_ids);
      write_gauge_stats(path("gauge_stats.csv"), report.post, ctx);
      double tau_pre = 0.0, tau_post = 0.0;
      for (std::size_t k = 1; k < report.pre.size(); ++k) {
        tau_pre += report.pre[k].kendall_tau;
        tau_post += report.post[k].kendall_tau;
      }
      const double denom = std::max<std::size_t>(report.pre.size() - 1, 1);
      tau_pre /= denom;
      tau_post /= denom;
      worst_ratio = std::max(worst_ratio, report.variance_ratio);
      per_layer.push_back({{"layer", l + 1},
                           {"variance_ratio", report.variance_ratio},
                           {"probe_var_pre", report.probe_var_pre},
                           {"probe_var_post", report.probe_var_post},
                           {"mean_tau_pre", tau_pre},
                           {"mean_tau_post", tau_post}});
    }
    summary.variance_ratio = worst_ratio;
    metrics["e2"] = {{"variance_ratio", worst_ratio},
                     {"per_layer", per_layer},
                     {"n_seeds", n_seeds}};
  }

  // Calibration batch for commutator maps: 32 uniform-random token sequences
  // plus 32 task-like ones, all of length min(16, max_t). Kept separate from
  // the scored corpus so delta values do not move with --inputs.
  std::vector<std::vector<int>> calibration_corpus() {
    const Index len = std::min<Index>(16, cfg.spec.max_t);
    std::vector<std::vector<int>> seqs;
    seqs.reserve(64);
    for (std::uint64_t i = 0; i < 32; ++i) {
      SeededRng rng = stream_rng(kCalibStream, i);
      std::vector<int> tokens(static_cast<std::size_t>(len));
      for (auto& t : tokens)
        t = static_cast<int>(
            rng.uniform_int(static_cast<std::uint64_t>(cfg.spec.vocab)));
      seqs.push_back(std::move(tokens));
    }
    for (std::uint64_t i = 0; i < 32; ++i) {
      SeededRng rng = stream_rng(kCalibStream, 32 + i);
      seqs.push_back(sample_task_input(len, rng));
    }
    return seqs;
  }

  void e3() {
    ensure_inputs();
    const int mid = cfg.spec.n_layers / 2;
    const ResidualBatch batch =
        collect_residuals(weights, calibration_corpus(), mid);
    std::vector<Submodule> modules;
    for (int l = 0; l < cfg.spec.n_layers; ++l) {
      modules.push_back(make_attention_sublayer(weights, l));
      modules.push_back(make_mlp_sublayer(weights, l));
    }
    CommutatorMap map = commutator_map(modules, batch, "calib");
    const int drift_inputs = std::min<int>(8, static_cast<int>(inputs.size()));
    for (int l = 0; l < cfg.spec.n_layers; ++l) {
      const std::string a_id = "layer" + std::to_string(l) + ".attn";
      const std::string b_id = "layer" + std::to_string(l) + ".mlp";
      double drift = 0.0;
      for (int t = 0; t < drift_inputs; ++t)
        drift += reorder_drift(weights, inputs[t], modules[2 * l],
                               modules[2 * l + 1]);
      drift /= drift_inputs;
      for (auto& rec : map.records) {
        if (rec.module_a == a_id && rec.module_b == b_id) {
          rec.drift = drift;
          break;
        }
      }
    }
    write_commutator(path("commutator.csv"), commutator_cells(map, "model"), ctx);

    std::vector<Submodule> heads;
    for (int h = 0; h < cfg.spec.n_heads; ++h)
      heads.push_back(make_attention_head(weights, mid, h));
    const CommutatorMap head_map = commutator_map(heads, batch, "calib");
    write_commutator(
        path("commutator.csv"),
        commutator_cells(head_map, "layer" + std::to_string(mid) + ".attn"),
        ctx);

    const DriftCorrelation corr = delta_drift_correlation(map.records);
    summary.drift = corr;
    write_text_file(path("commutator_heatmap.svg"),
                    svg_heatmap(map.delta, map.ids, "submodule commutators"));

    json ces = json::array();
    for (const auto& ce : reorder_counterexamples(map.records, cfg.thresholds))
      ces.push_back({{"input", ce.input_id},
                     {"module_a", ce.module_a},
                     {"module_b", ce.module_b},
                     {"delta", ce.delta}});
    int n_drift = 0;
    for (const auto& rec : map.records) n_drift += rec.drift.has_value();
    metrics["e3"] = {{"spearman", corr.spearman},
                     {"pearson", corr.pearson},
                     {"theil_sen", corr.theil_sen},
                     {"degenerate", corr.degenerate},
                     {"warning", corr.warning},
                     {"n_pairs", map.records.size()},
                     {"n_drift_pairs", n_drift},
                     {"counterexamples", ces}};
  }

  void e4() {
    ensure_inputs();
    const RopeDriftCurve curve =
        rope_drift(weights, inputs, default_offset_sweep());
    std::vector<CsvCells> rows;
    for (Index l = 0; l < curve.distances.rows(); ++l) {
      for (std::size_t o = 0; o < curve.offsets.size(); ++o) {
        rows.push_back({std::to_string(l), format_double(curve.offsets[o]),
                        format_double(curve.distances(l, static_cast<Index>(o))),
                        ctx.model, std::to_string(ctx.seed), ctx.ts,
                        std::to_string(ctx.schema)});
      }
    }
    append_rows(path("rope_drift.csv"), rope_drift_schema(), rows,
                kArtifactSchemaVersion);
    summary.area_under_drift = curve.area_under_drift;
    std::vector<ScatterPoint> pts;
    for (std::size_t k = 0; k < curve.magnitudes.size(); ++k)
      pts.push_back({curve.magnitudes[k], curve.mean_distance[k], 0});
    write_text_file(path("rope_drift.svg"),
                    svg_scatter(pts, "phase-offset drift", "|offset| (radians)",
                                "mean score distance"));
    metrics["e4"] = {{"area_under_drift", curve.area_under_drift},
                     {"n_offsets", curve.offsets.size()},
                     {"n_layers", curve.distances.rows()}};
  }

  void e5() {
    ensure_scan(true);
    if (!scan_rows_kept)
      raise("insufficient-data", "loop rows were not retained by this run");
    write_holonomy(path("holonomy.csv"), scan_rows, ctx);
    write_holonomy(path("holonomy.csv"), confirmed_rows, ctx);
    summary.loops_scanned = loops_scanned;
    summary.loops_confirmed = loops_confirmed;
    const std::vector<LoopScore>& plot_rows =
        confirmed_rows.empty() ? scan_rows : confirmed_rows;
    if (!plot_rows.empty()) {
      std::vector<ScatterPoint> pts;
      for (const auto& s : plot_rows)
        pts.push_back({static_cast<double>(s.loop.i), s.kappa, s.loop.layer});
      write_text_file(path("holonomy_scatter.svg"),
                      svg_scatter(pts, "loop curvature by position", "position",
                                  "kappa"));
    }
    metrics["e5"] = {
        {"loops_scanned", loops_scanned},
        {"loops_confirmed", loops_confirmed},
        {"confirm_fraction",
         loops_scanned > 0
             ? static_cast<double>(loops_confirmed) / loops_scanned
             : 0.0},
        {"warnings", scan_warnings}};
  }

  void e6() {
    ensure_records();
    ensure_scan(false);
    if (records.size() != inputs.size())
      raise("invariant-violation", "one invariance record per input expected");
    std::vector<double> p95(records.size());
    std::vector<double> kmax(records.size());
    std::vector<int> labels(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      p95[i] = aggregates[i].kappa_p95;
      kmax[i] = aggregates[i].kappa_max;
      labels[i] = records[i].label;
    }
    const int positives =
        static_cast<int>(std::count(labels.begin(), labels.end(), 1));
    if (positives == 0 || positives == static_cast<int>(labels.size())) {
      const std::string note =
          "degenerate-labels: every input has label " + std::to_string(labels[0]) +
          "; ranking metrics are undefined on this corpus";
      summary.prediction_note = note;
      metrics["e6"] = {{"note", note}, {"n", labels.size()}, {"positives", positives}};
      return;
    }
    const BinaryMetrics m = roc_auc_ap(p95, labels);
    const BootstrapCi auc_ci = bootstrap_ci(
        [&](const std::vector<Index>& idx) {
          std::vector<double> s(idx.size());
          std::vector<int> y(idx.size());
          for (std::size_t k = 0; k < idx.size(); ++k) {
            s[k] = p95[static_cast<std::size_t>(idx[k])];
            y[k] = labels[static_cast<std::size_t>(idx[k])];
          }
          return roc_auc_ap(s, y).auc;
        },
        static_cast<Index>(p95.size()), labels, cfg.bootstrap);
    const CalibrationReport cal = calibration(p95, labels);

    double null_sum = 0.0;
    for (int p = 0; p < cfg.null_permutations; ++p) {
      std::vector<double> permuted = p95;
      SeededRng rng = stream_rng(kNullPermStream, static_cast<std::uint64_t>(p));
      rng.shuffle(permuted);
      null_sum += roc_auc_ap(permuted, labels).auc;
    }
    const double null_mean = null_sum / cfg.null_permutations;

    // Width/depth-matched re-initialization: same pipeline, unrelated weights.
    const ModelWeights<double> reinit = init_model<double>(
        cfg.spec, splitmix64(cfg.seed + 0x7265696e69746dULL));
    std::vector<KappaAggregate> reinit_agg;
    score_corpus(reinit, kReinitSelectStream, kReinitScanStream, false,
                 reinit_agg, nullptr);
    std::vector<double> reinit_p95(records.size());
    for (std::size_t i = 0; i < records.size(); ++i)
      reinit_p95[i] = reinit_agg[i].kappa_p95;
    const double reinit_auc = roc_auc_ap(reinit_p95, labels).auc;

    summary.prediction = m;
    summary.prediction_auc_ci = auc_ci;
    summary.null_auc_mean = null_mean;
    summary.random_init_auc = reinit_auc;
    summary.brier = cal.brier;
    summary.ece = cal.ece;
    write_text_file(path("roc.svg"),
                    svg_roc(m.roc, "curvature vs invariance break, auc " +
                                       format_double(m.auc)));
    metrics["e6"] = {{"score", "kappa_p95"},
                     {"auc", m.auc},
                     {"auc_lo", auc_ci.lo},
                     {"auc_hi", auc_ci.hi},
                     {"ap", m.ap},
                     {"brier", cal.brier},
                     {"ece", cal.ece},
                     {"auc_kappa_max", roc_auc_ap(kmax, labels).auc},
                     {"null_auc_mean", null_mean},
                     {"null_permutations", cfg.null_permutations},
                     {"random_init_auc", reinit_auc},
                     {"n", labels.size()},
                     {"positives", positives}};
  }

  void e7() {
    ensure_scan(false);
    const int repeats = 5;
    double sink = 0.0;
    const Clock::time_point t0 = Clock::now();
    for (int rep = 0; rep < repeats; ++rep) {
      for (const auto& tokens : inputs) {
        const ActivationTrace<double> trace = forward(weights, tokens);
        sink += trace.logits(0, 0);
      }
    }
    timings.baseline_seconds = seconds_since(t0) / repeats;
    if (!std::isfinite(sink))
      raise("numeric-overflow", "baseline forward produced non-finite logits");
    const OverheadReport report = report_overhead(timings);
    append_rows(path("overhead.csv"), overhead_schema(),
                overhead_cells(timings, report, ctx), kArtifactSchemaVersion);
    summary.timings = timings;
    summary.overhead = report;
    metrics["e7"] = {{"scan_percent", report.scan_percent},
                     {"confirm_percent", report.confirm_percent},
                     {"total_percent", report.total_percent},
                     {"baseline_seconds", timings.baseline_seconds},
                     {"scan_seconds", timings.scan_seconds},
                     {"confirm_seconds", timings.confirm_seconds},
                     {"total_seconds", timings.total_seconds},
                     {"baseline_repeats", repeats}};
  }

  void run_experiment(const std::string& name) {
    ExperimentStatus st;
    st.name = name;
    const Clock::time_point t0 = Clock::now();
    try {
      if (name == "e1") e1();
      else if (name == "e2") e2();
      else if (name == "e3") e3();
      else if (name == "e4") e4();
      else if (name == "e5") e5();
      else if (name == "e6") e6();
      else if (name == "e7") e7();
    } catch (const std::exception& e) {
      st.ok = false;
      st.error = e.what();
    }
    st.seconds = seconds_since(t0);
    json entry = {{"ok", st.ok}, {"seconds", st.seconds}};
    if (!st.ok) entry["error"] = st.error;
    metrics["experiments"][name] = entry;
    summary.all_ok = summary.all_ok && st.ok;
    summary.experiments.push_back(st);
  }

  void write_metrics() {
    std::ofstream f(path("metrics.json"), std::ios::binary | std::ios::trunc);
    if (!f) raise("io-error", "cannot write metrics.json");
    f << metrics.dump(2) << "\n";
  }
};

}  // namespace

SuiteSummary run_suite(const SuiteConfig& cfg) {
  validate_config(cfg);
  const std::vector<std::string> requested = [&] {
    std::set<std::string> s(cfg.experiments.begin(), cfg.experiments.end());
    std::vector<std::string> out;
    for (const auto& name : all_experiments())
      if (s.count(name)) out.push_back(name);
    return out;
  }();
  Runner runner(cfg);
  runner.prepare();
  for (const auto& name : requested) runner.run_experiment(name);
  if (!requested.empty()) runner.write_metrics();
  return std::move(runner.summary);
}

}  // namespace wilson
