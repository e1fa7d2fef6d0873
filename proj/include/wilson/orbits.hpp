#pragma once

// Semantics-preserving orbits over a toy classification task, the decision
// function they are scored against, invariance-ratio records with failure
// labels, and an offline scorer for black-box transcript CSVs.

#include <wilson/model.hpp>
#include <wilson/numerics.hpp>
#include <wilson/stats.hpp>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace wilson {

// Token alphabet for the balanced-bracket task. Brackets carry the label,
// '+' marks rewrite sites, and identifiers are semantically inert — renaming
// them can never change the ground truth, which is what makes the orbits
// below label-preserving by construction.
struct TaskAlphabet {
  int open = 0;
  int close = 1;
  int plus = 2;
  int id_first = 16;
  int id_last = 63;

  bool is_identifier(int t) const { return t >= id_first && t <= id_last; }
  bool is_bracket(int t) const { return t == open || t == close; }
};

// Ground truth: 1 iff the bracket tokens balance (depth never dips below
// zero and ends at zero). Every non-bracket token is ignored.
int task_label(const std::vector<int>& tokens, const TaskAlphabet& alpha = {});

// Random task input of exactly `length` tokens (length >= 5): a balanced
// bracket walk with identifiers and one id '+' id triple (distinct operands)
// spliced in, then with probability 1/2 a single bracket is flipped, which
// always unbalances — so labels come out roughly even and both transform
// kinds below are applicable to every sample.
std::vector<int> sample_task_input(Index length, SeededRng& rng,
                                   const TaskAlphabet& alpha = {});

enum class TransformKind { alpha_rename, algebraic_rewrite };

struct Orbit {
  std::vector<int> base_input;
  std::vector<std::vector<int>> variants;
  TransformKind transform_kind = TransformKind::alpha_rename;
};

// Generates n_variants semantics-preserving variants of `base`.
// alpha_rename draws a fresh bijection of the identifier alphabet per
// variant (maps acting as the identity on the identifiers actually present
// are excluded, so variant != base); algebraic_rewrite swaps the operands of
// one id '+' id site with distinct operands. A base with no applicable site
// raises an empty-orbit error. Every variant is re-checked against
// task_label before the orbit is returned.
Orbit generate_orbit(const std::vector<int>& base, TransformKind kind,
                     Index n_variants, SeededRng& rng,
                     const TaskAlphabet& alpha = {});

// Task decision: argmax over the final-position logits, ties broken toward
// the lowest token id.
int decision(const ModelWeights<double>& w, const std::vector<int>& tokens,
             const ForwardOptions& opts = {});

struct IrRecord {
  std::string input_id;
  double ir = 0;      // fraction of variants that agree with the base
  double tol = 0;     // tolerance delta used for the label
  int label = 0;      // 1 iff ir < 1 - tol
  Index matches = 0;  // agreeing variants, retained for the micro aggregate
  Index orbit_size = 0;
};

IrRecord invariance_ratio(const ModelWeights<double>& w, const Orbit& orbit,
                          double tol, const std::string& input_id);

// Per-orbit records; record i always belongs to orbits[i] regardless of the
// worker count. input_id is id_prefix + decimal index.
std::vector<IrRecord> ir_records(const ModelWeights<double>& w,
                                 const std::vector<Orbit>& orbits, double tol,
                                 int workers = 1,
                                 const std::string& id_prefix = "in");

struct IrAggregates {
  double macro = 0;  // mean per-input IR
  double micro = 0;  // total matches / total variants
  BootstrapCi macro_ci;
  BootstrapCi micro_ci;
};

// Aggregates with percentile-bootstrap CIs stratified by failure label.
IrAggregates ir_aggregates(const std::vector<IrRecord>& records,
                           const BootstrapConfig& cfg = {});

// --- black-box transcript scoring -------------------------------------------
//
// Offline scorer for chat-transcript CSVs with columns
//   task_id,variant,condition,input_id,final_answer,correct,notes[,model]
// task_id names the check kind (paraphrase | pathway | ordering) and may
// carry a query suffix after a final '.' (e.g. "paraphrase.q1"); bare kinds
// fall into a single default query "". Scores per (query, model):
//   IR  — fraction of variant=="paraphrase" rows whose answer matches the
//         majority answer over all paraphrase-kind rows (base included;
//         majority ties resolve to the lexicographically smallest answer)
//   SI  — 1 - IR
//   PDR — fraction of pathway rows after the first whose answer differs
//         from the first pathway row
//   OD  — 1 iff any ordering row's answer differs from the first
// With a model column present, per-query model pairs additionally get a
// cross-model drift indicator: 1 iff the two majority answers differ.

struct BlackboxRow {
  std::string task_id, variant, condition, input_id, final_answer, notes;
  std::string model;  // "" when the file has no model column
  int correct = 0;
  std::size_t line = 0;  // 1-based physical line the row starts on
};

struct BlackboxScore {
  std::string query;
  std::string model;
  std::optional<std::string> majority;  // over paraphrase-kind rows
  std::optional<double> ir, si, pdr;
  std::optional<int> od;
  Index n_paraphrase = 0;  // variant=="paraphrase" rows (the IR denominator)
  Index n_pathway = 0;
  Index n_ordering = 0;
};

struct BlackboxDrift {
  std::string query, model_a, model_b;  // model_a < model_b
  int differs = 0;
};

struct BlackboxReport {
  std::vector<BlackboxRow> rows;
  std::vector<BlackboxScore> scores;  // sorted by (query, model)
  std::vector<BlackboxDrift> drift;   // sorted by (query, model_a, model_b)
  bool has_model_column = false;
};

// Malformed input (bad header, field-count or quoting errors, non-binary
// `correct`, unknown task kind) raises a parse-error naming the 1-based line.
BlackboxReport blackbox_scores(std::istream& in);
BlackboxReport blackbox_scores_text(const std::string& csv);

}  // namespace wilson
