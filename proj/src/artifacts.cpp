#include <wilson/artifacts.hpp>

#include <json.hpp>

#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace wilson {

std::string CsvSchema::header() const {
  std::string out;
  for (const std::string& col : columns) {
    if (!out.empty()) out += ',';
    out += col;
  }
  return out;
}

const CsvSchema& holonomy_schema() {
  static const CsvSchema schema{
      "holonomy",
      {"position", "layer", "kappa", "model", "seed", "ts", "schema"}};
  return schema;
}

const CsvSchema& commutator_schema() {
  static const CsvSchema schema{
      "commutator",
      {"i", "j", "value", "block", "model", "seed", "ts", "schema"}};
  return schema;
}

const CsvSchema& ir_schema() {
  static const CsvSchema schema{
      "ir", {"input_id", "IR", "tol", "label", "model", "seed", "ts", "schema"}};
  return schema;
}

const CsvSchema& gauge_stats_schema() {
  static const CsvSchema schema{
      "gauge_stats",
      {"layer", "seed", "kendall_tau", "probe_var", "model", "ts", "schema"}};
  return schema;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

bool valid_id(const std::string& id) {
  if (id.empty()) return false;
  for (const char c : id)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '_' &&
        c != '-')
      return false;
  return true;
}

std::string iso8601_utc(std::time_t t) {
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[80];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec);
  return buf;
}

std::time_t parse_iso8601_utc(const std::string& ts) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char z = 0;
  if (std::sscanf(ts.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c", &y, &mo, &d, &h,
                  &mi, &s, &z) != 7 ||
      z != 'Z')
    raise("invalid-argument", "not an ISO-8601 UTC timestamp: " + ts);
  std::tm tm{};
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = s;
  return timegm(&tm);
}

std::string now_iso8601_utc() { return iso8601_utc(std::time(nullptr)); }

namespace {

void check_cell(const std::string& cell) {
  if (cell.empty() || cell.find_first_of(",\"\n\r") != std::string::npos)
    raise("invalid-argument", "CSV cell is empty or needs quoting: '" + cell + "'");
}

void check_context(const RunContext& ctx) {
  if (!valid_id(ctx.model))
    raise("invalid-argument", "model id must match [A-Za-z0-9._-]+");
  if (ctx.ts.empty()) raise("invalid-argument", "run context lacks a timestamp");
}

}  // namespace

void append_rows(const std::string& path, const CsvSchema& schema,
                 const std::vector<CsvCells>& rows, int schema_version) {
  for (const CsvCells& row : rows) {
    if (row.size() != schema.columns.size())
      raise("invalid-dimension", schema.name + " row has " +
                                     std::to_string(row.size()) + " cells, " +
                                     "schema has " +
                                     std::to_string(schema.columns.size()));
    for (const std::string& cell : row) check_cell(cell);
  }

  // Refuse rather than touch a file that does not match the schema.
  {
    std::ifstream in(path);
    std::string line;
    if (in && std::getline(in, line) && !line.empty()) {
      if (line != schema.header())
        raise("schema-mismatch",
              path + ": existing header does not match the " + schema.name +
                  " schema");
      const std::string want = std::to_string(schema_version);
      std::size_t line_no = 1;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos || line.substr(comma + 1) != want)
          raise("schema-mismatch", path + " line " + std::to_string(line_no) +
                                       ": stored schema differs from " + want);
      }
    }
  }

  std::ofstream out(path, std::ios::app);
  if (!out) raise("io-error", "cannot open " + path + " for append");
  if (out.tellp() == std::ofstream::pos_type(0))
    out << schema.header() << '\n';
  for (const CsvCells& row : rows) {
    std::string line;
    for (const std::string& cell : row) {
      if (!line.empty()) line += ',';
      line += cell;
    }
    out << line << '\n';
  }
  if (!out) raise("io-error", "write to " + path + " failed");
}

void write_holonomy(const std::string& path, const std::vector<LoopScore>& rows,
                    const RunContext& ctx) {
  check_context(ctx);
  std::vector<CsvCells> cells;
  cells.reserve(rows.size());
  for (const LoopScore& score : rows)
    cells.push_back({std::to_string(score.loop.i),
                     std::to_string(score.loop.layer),
                     format_double(score.kappa), ctx.model,
                     std::to_string(ctx.seed), ctx.ts,
                     std::to_string(ctx.schema)});
  append_rows(path, holonomy_schema(), cells, ctx.schema);
}

std::vector<CommutatorCell> commutator_cells(const CommutatorMap& map,
                                             const std::string& block) {
  if (!valid_id(block))
    raise("invalid-argument", "block id must match [A-Za-z0-9._-]+");
  std::vector<CommutatorCell> cells;
  const Index n = map.delta.rows();
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j)
      cells.push_back({static_cast<int>(i), static_cast<int>(j),
                       map.delta(i, j), block});
  return cells;
}

void write_commutator(const std::string& path,
                      const std::vector<CommutatorCell>& rows,
                      const RunContext& ctx) {
  check_context(ctx);
  std::vector<CsvCells> cells;
  cells.reserve(rows.size());
  for (const CommutatorCell& row : rows) {
    if (!valid_id(row.block))
      raise("invalid-argument", "block id must match [A-Za-z0-9._-]+");
    cells.push_back({std::to_string(row.i), std::to_string(row.j),
                     format_double(row.value), row.block, ctx.model,
                     std::to_string(ctx.seed), ctx.ts,
                     std::to_string(ctx.schema)});
  }
  append_rows(path, commutator_schema(), cells, ctx.schema);
}

void write_ir(const std::string& path, const std::vector<IrRecord>& rows,
              const RunContext& ctx) {
  check_context(ctx);
  std::vector<CsvCells> cells;
  cells.reserve(rows.size());
  for (const IrRecord& rec : rows) {
    if (!valid_id(rec.input_id))
      raise("invalid-argument", "input id must match [A-Za-z0-9._-]+");
    cells.push_back({rec.input_id, format_double(rec.ir),
                     format_double(rec.tol), std::to_string(rec.label),
                     ctx.model, std::to_string(ctx.seed), ctx.ts,
                     std::to_string(ctx.schema)});
  }
  append_rows(path, ir_schema(), cells, ctx.schema);
}

void write_gauge_stats(const std::string& path,
                       const std::vector<GaugeStats>& rows,
                       const RunContext& ctx) {
  check_context(ctx);
  std::vector<CsvCells> cells;
  cells.reserve(rows.size());
  for (const GaugeStats& row : rows)
    cells.push_back({std::to_string(row.layer), std::to_string(row.seed),
                     format_double(row.kendall_tau),
                     format_double(row.probe_var), ctx.model, ctx.ts,
                     std::to_string(ctx.schema)});
  append_rows(path, gauge_stats_schema(), cells, ctx.schema);
}

std::string probe_kind_name(ProbeKind kind) {
  return kind == ProbeKind::rademacher ? "rademacher" : "gaussian";
}

ProbeKind probe_kind_from(const std::string& name) {
  if (name == "rademacher") return ProbeKind::rademacher;
  if (name == "gaussian") return ProbeKind::gaussian;
  raise("invalid-argument", "unknown probe kind: " + name);
}

void write_manifest(const std::string& path, const RunManifest& m) {
  if (std::filesystem::exists(path))
    raise("io-error", path + ": manifest already written; refusing to overwrite");
  if (!valid_id(m.model_hash))
    raise("invalid-argument", "manifest model hash must match [A-Za-z0-9._-]+");
  if (m.ts.empty()) raise("invalid-argument", "manifest lacks a timestamp");

  nlohmann::json j;
  j["schema"] = m.schema;
  j["ts"] = m.ts;
  j["model_hash"] = m.model_hash;
  j["seeds"] = m.seeds;
  j["knobs"] = {{"probes", m.knobs.probes},
                {"targets", m.knobs.targets},
                {"neighbors", m.knobs.neighbors},
                {"explore_fraction", m.knobs.explore_fraction},
                {"scan_quantile", m.knobs.scan_quantile},
                {"probe_kind", probe_kind_name(m.knobs.probe_kind)}};
  j["thresholds"] = {{"tau_kappa", m.tau_kappa},
                     {"tau_delta", m.tau_delta},
                     {"tol_delta", m.tol_delta}};

  std::ofstream out(path);
  if (!out) raise("io-error", "cannot open " + path + " for write");
  out << j.dump(2) << '\n';
  if (!out) raise("io-error", "write to " + path + " failed");
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise("io-error", "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    raise("parse-error", path + ": " + e.what());
  }
  RunManifest m;
  try {
    m.schema = j.at("schema").get<int>();
    m.ts = j.at("ts").get<std::string>();
    m.model_hash = j.at("model_hash").get<std::string>();
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    const auto& knobs = j.at("knobs");
    m.knobs.probes = knobs.at("probes").get<int>();
    m.knobs.targets = knobs.at("targets").get<int>();
    m.knobs.neighbors = knobs.at("neighbors").get<int>();
    m.knobs.explore_fraction = knobs.at("explore_fraction").get<double>();
    m.knobs.scan_quantile = knobs.at("scan_quantile").get<double>();
    m.knobs.probe_kind =
        probe_kind_from(knobs.at("probe_kind").get<std::string>());
    const auto& thresholds = j.at("thresholds");
    m.tau_kappa = thresholds.at("tau_kappa").get<double>();
    m.tau_delta = thresholds.at("tau_delta").get<double>();
    m.tol_delta = thresholds.at("tol_delta").get<double>();
  } catch (const nlohmann::json::exception& e) {
    raise("parse-error", path + ": " + e.what());
  }
  return m;
}

Freshness expire_check(const RunManifest& m, std::time_t now,
                       double ttl_minutes,
                       const std::string& current_model_hash) {
  if (current_model_hash != m.model_hash) return Freshness::stale;
  const double age_minutes =
      std::difftime(now, parse_iso8601_utc(m.ts)) / 60.0;
  return age_minutes > ttl_minutes ? Freshness::stale : Freshness::fresh;
}

}  // namespace wilson
