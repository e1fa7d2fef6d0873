#pragma once

// Append-only, schema-versioned CSV artifacts plus the per-run manifest.
// Headers are bit-exact contracts, every row carries model, seed, ts, and
// schema columns, and a file whose header or stored schema disagrees with
// the writer is refused rather than rewritten.

#include <wilson/commutator.hpp>
#include <wilson/curvature.hpp>
#include <wilson/gauge.hpp>
#include <wilson/numerics.hpp>
#include <wilson/orbits.hpp>

#include <ctime>
#include <string>
#include <vector>

namespace wilson {

inline constexpr int kArtifactSchemaVersion = 1;

struct CsvSchema {
  std::string name;
  std::vector<std::string> columns;
  std::string header() const;  // comma-joined column names
};

const CsvSchema& holonomy_schema();     // position,layer,kappa,...
const CsvSchema& commutator_schema();   // i,j,value,block,...
const CsvSchema& ir_schema();           // input_id,IR,tol,label,...
const CsvSchema& gauge_stats_schema();  // layer,seed,kendall_tau,probe_var,...

// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double v);

// CSV identifier fields are restricted to [A-Za-z0-9._-]+ so no quoting is
// ever needed.
bool valid_id(const std::string& id);

std::string iso8601_utc(std::time_t t);
std::time_t parse_iso8601_utc(const std::string& ts);
std::string now_iso8601_utc();

// Context columns stamped onto every row a run emits.
struct RunContext {
  std::string model;  // short model id (hex prefix of the container hash)
  std::uint64_t seed = 0;
  std::string ts;  // ISO-8601 UTC
  int schema = kArtifactSchemaVersion;
};

// One fully rendered CSV row (all columns, in schema order).
using CsvCells = std::vector<std::string>;

// Core writer: creates `path` with the schema header when absent or empty,
// otherwise verifies the header and every stored schema value before
// appending. Existing bytes are never rewritten.
void append_rows(const std::string& path, const CsvSchema& schema,
                 const std::vector<CsvCells>& rows, int schema_version);

void write_holonomy(const std::string& path,
                    const std::vector<LoopScore>& rows, const RunContext& ctx);

struct CommutatorCell {
  int i = 0, j = 0;  // indices into the map's id list, i <= j
  double value = 0;
  std::string block;  // container whose sub-blocks the map indexes
};

// Upper triangle (diagonal included) of a commutator map, labeled with the
// container the map was computed over.
std::vector<CommutatorCell> commutator_cells(const CommutatorMap& map,
                                             const std::string& block);

void write_commutator(const std::string& path,
                      const std::vector<CommutatorCell>& rows,
                      const RunContext& ctx);

void write_ir(const std::string& path, const std::vector<IrRecord>& rows,
              const RunContext& ctx);

// gauge_stats rows carry their own per-row seed; ctx supplies model/ts/schema.
void write_gauge_stats(const std::string& path,
                       const std::vector<GaugeStats>& rows,
                       const RunContext& ctx);

struct RunManifest {
  std::string model_hash;  // full container hash, forensic anchor
  std::vector<std::uint64_t> seeds;
  SamplingKnobs knobs;
  double tau_kappa = 0.12;
  double tau_delta = 0.10;
  double tol_delta = 0.02;  // orbit-failure tolerance
  int schema = kArtifactSchemaVersion;
  std::string ts;
};

std::string probe_kind_name(ProbeKind kind);
ProbeKind probe_kind_from(const std::string& name);

// Writes manifest.json exactly once; an existing file is never overwritten.
void write_manifest(const std::string& path, const RunManifest& m);
RunManifest read_manifest(const std::string& path);

enum class Freshness { fresh, stale };

// Maps expire after ttl_minutes or on any weight change; the boundary
// age == ttl is still fresh.
Freshness expire_check(const RunManifest& m, std::time_t now,
                       double ttl_minutes,
                       const std::string& current_model_hash);

}  // namespace wilson
