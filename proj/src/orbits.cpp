#include <wilson/orbits.hpp>

#include <wilson/parallel.hpp>

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <istream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace wilson {

int task_label(const std::vector<int>& tokens, const TaskAlphabet& alpha) {
  long depth = 0;
  for (int t : tokens) {
    if (t == alpha.open) ++depth;
    else if (t == alpha.close && --depth < 0) return 0;
  }
  return depth == 0 ? 1 : 0;
}

std::vector<int> sample_task_input(Index length, SeededRng& rng,
                                   const TaskAlphabet& alpha) {
  if (length < 5)
    raise("invalid-argument", "sample_task_input: length must be at least 5");
  if (alpha.id_last - alpha.id_first + 1 < 2)
    raise("invalid-argument",
          "sample_task_input: need at least two identifier symbols");

  const Index max_pairs = (length - 3) / 2;
  const Index n_pairs =
      1 + static_cast<Index>(
              rng.uniform_int(static_cast<std::uint64_t>(max_pairs)));

  std::vector<int> tokens;
  tokens.reserve(static_cast<std::size_t>(length));
  Index open_left = n_pairs, depth = 0;
  while (open_left > 0 || depth > 0) {
    const bool open_now = open_left > 0 && (depth == 0 || rng.uniform() < 0.5);
    if (open_now) {
      tokens.push_back(alpha.open);
      --open_left;
      ++depth;
    } else {
      tokens.push_back(alpha.close);
      --depth;
    }
  }

  auto rand_id = [&rng, &alpha] {
    return alpha.id_first +
           static_cast<int>(rng.uniform_int(
               static_cast<std::uint64_t>(alpha.id_last - alpha.id_first + 1)));
  };
  const Index n_fill = length - 2 * n_pairs - 3;
  for (Index k = 0; k < n_fill; ++k) {
    const Index at = static_cast<Index>(rng.uniform_int(tokens.size() + 1));
    tokens.insert(tokens.begin() + at, rand_id());
  }

  // The rewrite site goes in last so no later insertion can split it.
  const int a = rand_id();
  int b = rand_id();
  while (b == a) b = rand_id();
  const int site[3] = {a, alpha.plus, b};
  const Index at = static_cast<Index>(rng.uniform_int(tokens.size() + 1));
  tokens.insert(tokens.begin() + at, site, site + 3);

  // Flipping one bracket moves the depth sum off zero, so this always
  // unbalances a balanced walk.
  if (rng.uniform() < 0.5) {
    std::vector<Index> brackets;
    for (Index p = 0; p < static_cast<Index>(tokens.size()); ++p)
      if (alpha.is_bracket(tokens[static_cast<std::size_t>(p)]))
        brackets.push_back(p);
    const Index p = brackets[rng.uniform_int(brackets.size())];
    auto& t = tokens[static_cast<std::size_t>(p)];
    t = t == alpha.open ? alpha.close : alpha.open;
  }
  return tokens;
}

namespace {

// Random permutation of the identifier alphabet that moves at least one of
// the given present slots, so the induced relabeling never fixes the input.
std::vector<int> permutation_moving_present(const std::vector<int>& present,
                                            int n_ids, SeededRng& rng) {
  std::vector<int> perm(static_cast<std::size_t>(n_ids));
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  bool moves = false;
  for (int s : present)
    if (perm[static_cast<std::size_t>(s)] != s) {
      moves = true;
      break;
    }
  if (!moves) {
    // perm fixes every present slot; swapping a fixed slot with any other
    // image makes it move (the other image cannot also be s0).
    const int s0 = present.front();
    std::swap(perm[static_cast<std::size_t>(s0)],
              perm[static_cast<std::size_t>((s0 + 1) % n_ids)]);
  }
  return perm;
}

}  // namespace

Orbit generate_orbit(const std::vector<int>& base, TransformKind kind,
                     Index n_variants, SeededRng& rng,
                     const TaskAlphabet& alpha) {
  if (base.empty()) raise("invalid-argument", "generate_orbit: empty base input");
  if (n_variants < 1)
    raise("invalid-argument", "generate_orbit: n_variants must be positive");
  if (alpha.id_last < alpha.id_first)
    raise("invalid-argument", "generate_orbit: empty identifier alphabet");

  Orbit orbit;
  orbit.base_input = base;
  orbit.transform_kind = kind;
  const int n_ids = alpha.id_last - alpha.id_first + 1;

  if (kind == TransformKind::alpha_rename) {
    std::vector<int> present;
    for (int t : base)
      if (alpha.is_identifier(t)) present.push_back(t - alpha.id_first);
    std::sort(present.begin(), present.end());
    present.erase(std::unique(present.begin(), present.end()), present.end());
    if (present.empty())
      raise("empty-orbit", "base contains no identifier tokens to rename");
    if (n_ids < 2)
      raise("empty-orbit",
            "identifier alphabet too small for a non-identity renaming");
    for (Index v = 0; v < n_variants; ++v) {
      const std::vector<int> perm =
          permutation_moving_present(present, n_ids, rng);
      std::vector<int> variant = base;
      for (auto& t : variant)
        if (alpha.is_identifier(t))
          t = alpha.id_first + perm[static_cast<std::size_t>(t - alpha.id_first)];
      orbit.variants.push_back(std::move(variant));
    }
  } else {
    std::vector<Index> sites;
    for (Index p = 0; p + 2 < static_cast<Index>(base.size()); ++p) {
      const auto u = static_cast<std::size_t>(p);
      if (alpha.is_identifier(base[u]) && base[u + 1] == alpha.plus &&
          alpha.is_identifier(base[u + 2]) && base[u] != base[u + 2])
        sites.push_back(p);
    }
    if (sites.empty())
      raise("empty-orbit",
            "base contains no id '+' id site with distinct operands");
    for (Index v = 0; v < n_variants; ++v) {
      const auto p = static_cast<std::size_t>(
          sites[rng.uniform_int(sites.size())]);
      std::vector<int> variant = base;
      std::swap(variant[p], variant[p + 2]);
      orbit.variants.push_back(std::move(variant));
    }
  }

  const int want = task_label(base, alpha);
  for (const auto& v : orbit.variants)
    if (task_label(v, alpha) != want)
      raise("invariant-violation", "generate_orbit: variant changed the task label");
  return orbit;
}

int decision(const ModelWeights<double>& w, const std::vector<int>& tokens,
             const ForwardOptions& opts) {
  const ActivationTrace<double> trace = forward(w, tokens, opts);
  const Vecd logits = trace.final_logits();
  return argmax_lowest(logits);
}

IrRecord invariance_ratio(const ModelWeights<double>& w, const Orbit& orbit,
                          double tol, const std::string& input_id) {
  if (orbit.variants.empty())
    raise("insufficient-data", "invariance_ratio: orbit has no variants");
  if (!(tol >= 0.0 && tol <= 1.0))
    raise("invalid-argument", "invariance_ratio: tol must lie in [0, 1]");
  const int base = decision(w, orbit.base_input);
  Index matches = 0;
  for (const auto& v : orbit.variants)
    if (decision(w, v) == base) ++matches;
  IrRecord rec;
  rec.input_id = input_id;
  rec.tol = tol;
  rec.orbit_size = static_cast<Index>(orbit.variants.size());
  rec.matches = matches;
  rec.ir = static_cast<double>(matches) / static_cast<double>(rec.orbit_size);
  rec.label = rec.ir < 1.0 - tol ? 1 : 0;
  return rec;
}

std::vector<IrRecord> ir_records(const ModelWeights<double>& w,
                                 const std::vector<Orbit>& orbits, double tol,
                                 int workers, const std::string& id_prefix) {
  if (orbits.empty()) raise("insufficient-data", "ir_records: no orbits");
  std::vector<IrRecord> out(orbits.size());
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  parallel_for(orbits.size(), workers, [&](std::size_t i) {
    if (failed.load(std::memory_order_relaxed)) return;
    try {
      out[i] = invariance_ratio(w, orbits[i], tol,
                                id_prefix + std::to_string(i));
    } catch (...) {
      const std::scoped_lock lock(error_mu);
      if (!error) error = std::current_exception();
      failed.store(true, std::memory_order_relaxed);
    }
  });
  if (error) std::rethrow_exception(error);
  return out;
}

IrAggregates ir_aggregates(const std::vector<IrRecord>& records,
                           const BootstrapConfig& cfg) {
  if (records.empty()) raise("insufficient-data", "ir_aggregates: no records");
  std::vector<int> strata(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const IrRecord& r = records[i];
    if (r.orbit_size <= 0 || r.matches < 0 || r.matches > r.orbit_size)
      raise("invalid-argument", "ir_aggregates: record counts are inconsistent");
    strata[i] = r.label ? 1 : 0;
  }
  const auto macro_stat = [&records](const std::vector<Index>& idx) {
    double s = 0;
    for (Index i : idx) s += records[static_cast<std::size_t>(i)].ir;
    return s / static_cast<double>(idx.size());
  };
  const auto micro_stat = [&records](const std::vector<Index>& idx) {
    double m = 0, v = 0;
    for (Index i : idx) {
      const IrRecord& r = records[static_cast<std::size_t>(i)];
      m += static_cast<double>(r.matches);
      v += static_cast<double>(r.orbit_size);
    }
    return m / v;
  };
  IrAggregates agg;
  agg.macro_ci =
      bootstrap_ci(macro_stat, static_cast<Index>(records.size()), strata, cfg);
  agg.micro_ci =
      bootstrap_ci(micro_stat, static_cast<Index>(records.size()), strata, cfg);
  agg.macro = agg.macro_ci.point;
  agg.micro = agg.micro_ci.point;
  return agg;
}

// --- black-box transcript scoring -------------------------------------------

namespace {

// RFC-4180-style record reader tracking 1-based physical lines. Quoted fields
// may contain commas, newlines, and doubled quotes.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  // Reads one record; false at end of input. Blank lines are skipped.
  bool next(std::vector<std::string>& fields, std::size_t& start_line) {
    fields.clear();
    int c = get();
    while (c == '\n') c = get();
    if (c == kEof) return false;
    start_line = line_;
    std::string field;
    bool in_quotes = false;  // inside a quoted field
    bool closed = false;     // current field's closing quote already seen
    for (;;) {
      if (in_quotes) {
        if (c == kEof)
          raise("parse-error", "unterminated quoted field (line " +
                                   std::to_string(quote_line_) + ")");
        if (c == '"') {
          if (in_.peek() == '"') {
            get();
            field.push_back('"');
          } else {
            in_quotes = false;
            closed = true;
          }
        } else {
          field.push_back(static_cast<char>(c));
        }
      } else if (c == ',' || c == '\n' || c == kEof) {
        fields.push_back(std::move(field));
        field.clear();
        closed = false;
        if (c != ',') return true;
      } else if (c == '"') {
        if (!field.empty() || closed)
          raise("parse-error",
                "stray quote in field (line " + std::to_string(line_) + ")");
        in_quotes = true;
        quote_line_ = line_;
      } else {
        if (closed)
          raise("parse-error", "text after closing quote (line " +
                                   std::to_string(line_) + ")");
        field.push_back(static_cast<char>(c));
      }
      c = get();
    }
  }

 private:
  static constexpr int kEof = std::char_traits<char>::eof();

  // Normalizes \r\n and bare \r to '\n' and counts physical lines.
  int get() {
    int c = in_.get();
    if (c == '\r') {
      if (in_.peek() == '\n') in_.get();
      c = '\n';
    }
    if (c == '\n') ++line_;
    return c;
  }

  std::istream& in_;
  std::size_t line_ = 1;
  std::size_t quote_line_ = 1;
};

const std::vector<std::string> kBlackboxHeader = {
    "task_id", "variant",      "condition", "input_id",
    "final_answer", "correct", "notes"};

}  // namespace

BlackboxReport blackbox_scores(std::istream& in) {
  BlackboxReport rep;
  CsvReader reader(in);
  std::vector<std::string> fields;
  std::size_t line = 0;

  if (!reader.next(fields, line))
    raise("parse-error", "empty input: missing header (line 1)");
  const bool has_model =
      fields.size() == kBlackboxHeader.size() + 1 && fields.back() == "model" &&
      std::equal(kBlackboxHeader.begin(), kBlackboxHeader.end(), fields.begin());
  if (!has_model && fields != kBlackboxHeader)
    raise("parse-error",
          "unexpected header (line " + std::to_string(line) + ")");
  rep.has_model_column = has_model;

  const std::size_t want = kBlackboxHeader.size() + (has_model ? 1 : 0);
  while (reader.next(fields, line)) {
    if (fields.size() != want)
      raise("parse-error", "expected " + std::to_string(want) +
                               " fields, got " + std::to_string(fields.size()) +
                               " (line " + std::to_string(line) + ")");
    BlackboxRow row;
    row.task_id = fields[0];
    row.variant = fields[1];
    row.condition = fields[2];
    row.input_id = fields[3];
    row.final_answer = fields[4];
    if (fields[5] != "0" && fields[5] != "1")
      raise("parse-error",
            "correct must be 0 or 1 (line " + std::to_string(line) + ")");
    row.correct = fields[5] == "1";
    row.notes = fields[6];
    if (has_model) row.model = fields[7];
    row.line = line;
    rep.rows.push_back(std::move(row));
  }

  struct Group {
    std::vector<std::pair<std::string, std::string>> paraphrase;  // (variant, answer)
    std::vector<std::string> pathway, ordering;  // answers in file order
  };
  std::map<std::pair<std::string, std::string>, Group> groups;
  for (const BlackboxRow& row : rep.rows) {
    std::string kind = row.task_id, query;
    if (const auto dot = row.task_id.rfind('.'); dot != std::string::npos) {
      kind = row.task_id.substr(0, row.task_id.find('.'));
      query = row.task_id.substr(dot + 1);
    }
    Group& g = groups[{query, row.model}];
    if (kind == "paraphrase")
      g.paraphrase.emplace_back(row.variant, row.final_answer);
    else if (kind == "pathway")
      g.pathway.push_back(row.final_answer);
    else if (kind == "ordering")
      g.ordering.push_back(row.final_answer);
    else
      raise("parse-error", "unknown task kind '" + kind + "' (line " +
                               std::to_string(row.line) + ")");
  }

  for (const auto& [key, g] : groups) {
    BlackboxScore s;
    s.query = key.first;
    s.model = key.second;
    if (!g.paraphrase.empty()) {
      std::map<std::string, Index> counts;
      for (const auto& [variant, answer] : g.paraphrase) ++counts[answer];
      std::string best;
      Index best_count = 0;
      // Ascending map order means ties resolve to the smallest answer.
      for (const auto& [answer, count] : counts)
        if (count > best_count) {
          best = answer;
          best_count = count;
        }
      s.majority = best;
      Index denom = 0, match = 0;
      for (const auto& [variant, answer] : g.paraphrase)
        if (variant == "paraphrase") {
          ++denom;
          if (answer == best) ++match;
        }
      s.n_paraphrase = denom;
      if (denom > 0) {
        s.ir = static_cast<double>(match) / static_cast<double>(denom);
        s.si = 1.0 - *s.ir;
      }
    }
    s.n_pathway = static_cast<Index>(g.pathway.size());
    if (g.pathway.size() >= 2) {
      Index diff = 0;
      for (std::size_t i = 1; i < g.pathway.size(); ++i)
        if (g.pathway[i] != g.pathway.front()) ++diff;
      s.pdr = static_cast<double>(diff) /
              static_cast<double>(g.pathway.size() - 1);
    }
    s.n_ordering = static_cast<Index>(g.ordering.size());
    if (g.ordering.size() >= 2) {
      int od = 0;
      for (std::size_t i = 1; i < g.ordering.size(); ++i)
        if (g.ordering[i] != g.ordering.front()) od = 1;
      s.od = od;
    }
    rep.scores.push_back(std::move(s));
  }

  if (has_model) {
    std::map<std::string, std::vector<const BlackboxScore*>> per_query;
    for (const BlackboxScore& s : rep.scores)
      if (s.majority) per_query[s.query].push_back(&s);
    for (const auto& [query, list] : per_query)
      for (std::size_t i = 0; i < list.size(); ++i)
        for (std::size_t j = i + 1; j < list.size(); ++j)
          rep.drift.push_back({query, list[i]->model, list[j]->model,
                               *list[i]->majority != *list[j]->majority});
  }
  return rep;
}

BlackboxReport blackbox_scores_text(const std::string& csv) {
  std::istringstream in(csv);
  return blackbox_scores(in);
}

}  // namespace wilson
