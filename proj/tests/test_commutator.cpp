#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "wilson/commutator.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

using namespace wilson;

namespace {

ModelSpec tiny_spec() {
  ModelSpec spec;
  spec.d_model = 8;
  spec.n_heads = 2;
  spec.n_layers = 3;
  spec.d_ff = 16;
  spec.vocab = 16;
  spec.max_t = 8;
  return spec;
}

Submodule linear_module(const std::string& id, Matd m) {
  Submodule s;
  s.id = id;
  s.apply = [m = std::move(m)](const Matd& x) { return Matd(x * m); };
  return s;
}

ResidualBatch random_batch(int count, Index t, Index d, std::uint64_t seed) {
  SeededRng rng(seed);
  ResidualBatch batch;
  for (int b = 0; b < count; ++b) {
    Matd x(t, d);
    for (Index i = 0; i < t; ++i)
      for (Index j = 0; j < d; ++j) x(i, j) = rng.normal();
    batch.push_back(std::move(x));
  }
  return batch;
}

}  // namespace

TEST_CASE("commutator_norm: self-commutation is exactly zero") {
  const ModelWeights<double> w = init_model<double>(tiny_spec(), 3);
  const auto batch = random_batch(4, 8, 8, 1);
  const auto attn = make_attention_sublayer(w, 1);
  CHECK(commutator_norm(attn, attn, batch) == 0.0);
}

TEST_CASE("commutator_norm: diagonal linear maps commute") {
  Vecd da(6), db(6);
  SeededRng rng(2);
  for (Index k = 0; k < 6; ++k) {
    da[k] = rng.uniform() + 0.5;
    db[k] = rng.uniform() + 0.5;
  }
  const auto a = linear_module("a", Matd(da.asDiagonal()));
  const auto b = linear_module("b", Matd(db.asDiagonal()));
  // Not bit-exact: the two evaluation orders round differently, but diagonal
  // maps commute mathematically so the gap is pure rounding noise.
  CHECK(commutator_norm(a, b, random_batch(3, 5, 6, 3)) < 1e-12);
}

TEST_CASE("commutator_norm: matches the dense matrix oracle") {
  SeededRng rng(4);
  const Index d = 6;
  Matd p(d, d), q(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) {
      p(i, j) = rng.normal();
      q(i, j) = rng.normal();
    }
  const auto a = linear_module("p", p);
  const auto b = linear_module("q", q);
  const auto batch = random_batch(5, 7, d, 5);

  // Oracle route: assemble the commutator matrix itself, apply once.
  const Matd c = q * p - p * q;
  double acc = 0;
  for (const Matd& x : batch) acc += (x * c).squaredNorm();
  const double oracle = std::sqrt(acc);
  CHECK(commutator_norm(a, b, batch) == doctest::Approx(oracle).epsilon(1e-10));

  // Scale covariance: scaling the batch scales delta linearly.
  ResidualBatch scaled;
  for (const Matd& x : batch) scaled.push_back(Matd(2.5 * x));
  CHECK(commutator_norm(a, b, scaled) ==
        doctest::Approx(2.5 * commutator_norm(a, b, batch)).epsilon(1e-9));
}

TEST_CASE("commutator_norm: error kinds") {
  const auto a = linear_module("a", Matd::Identity(4, 4));
  Submodule bad;
  bad.id = "bad";
  bad.apply = [](const Matd& x) { return Matd(x.leftCols(2)); };
  const auto batch = random_batch(2, 3, 4, 6);
  CHECK_THROWS_WITH_AS(commutator_norm(a, bad, batch),
                       doctest::Contains("incompatible-submodules"), Error);
  CHECK_THROWS_WITH_AS(commutator_norm(a, a, {}),
                       doctest::Contains("insufficient-data"), Error);
}

TEST_CASE("head contributions add up to the whole attention sublayer") {
  const ModelWeights<double> w = init_model<double>(tiny_spec(), 7);
  const auto batch = random_batch(1, 8, 8, 8);
  const Matd& x = batch[0];
  const Matd whole = make_attention_sublayer(w, 0).apply(x);
  Matd sum = x;
  for (int hh = 0; hh < 2; ++hh)
    sum += make_attention_head(w, 0, hh).apply(x) - x;
  CHECK((whole - sum).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("commutator_map: symmetry, zero diagonal, record ordering") {
  const ModelWeights<double> w = init_model<double>(tiny_spec(), 9);
  const std::vector<std::vector<int>> seqs{{3, 1, 4, 1, 5}, {9, 2, 6, 5, 3}};
  const auto batch = collect_residuals(w, seqs, 1);
  const std::vector<Submodule> mods{
      make_attention_head(w, 1, 0),
      make_attention_head(w, 1, 1),
      make_attention_sublayer(w, 1),
      make_mlp_sublayer(w, 1),
  };
  const auto map = commutator_map(mods, batch, "calib");
  REQUIRE(map.delta.rows() == 4);
  REQUIRE(map.records.size() == 6);
  for (Index i = 0; i < 4; ++i) {
    CHECK(map.delta(i, i) == 0.0);
    for (Index j = 0; j < 4; ++j) CHECK(map.delta(i, j) == map.delta(j, i));
  }
  for (const auto& rec : map.records) {
    CHECK(rec.module_a <= rec.module_b);
    CHECK(rec.batch_id == "calib");
    CHECK(rec.delta_fro >= 0.0);
  }
  // Real sublayers on real activations should not all commute.
  CHECK(map.delta.maxCoeff() > 0.0);
}

TEST_CASE("commutator_map: degenerate sizes and commuting families") {
  const auto batch = random_batch(2, 4, 5, 10);
  const auto single = commutator_map({linear_module("only", Matd::Identity(5, 5))},
                                     batch);
  CHECK(single.delta.rows() == 1);
  CHECK(single.delta(0, 0) == 0.0);
  CHECK(single.records.empty());

  std::vector<Submodule> diag;
  SeededRng rng(11);
  for (int k = 0; k < 3; ++k) {
    Vecd d(5);
    for (Index i = 0; i < 5; ++i) d[i] = rng.uniform() + 0.5;
    diag.push_back(linear_module("diag" + std::to_string(k),
                                 Matd(d.asDiagonal())));
  }
  const auto map = commutator_map(diag, batch);
  CHECK(map.delta.maxCoeff() < 1e-12);
}

TEST_CASE("reorder_drift: trivial cases and block validation") {
  const ModelWeights<double> w = init_model<double>(tiny_spec(), 13);
  const std::vector<int> tokens{3, 1, 4, 1, 5, 9, 2, 6};
  const auto attn = make_attention_sublayer(w, 1);
  const auto mlp = make_mlp_sublayer(w, 1);

  CHECK(reorder_drift(w, tokens, attn, attn) == 0.0);

  Submodule id_a, id_b;
  id_a.id = "id.a";
  id_a.layer = 1;
  id_a.apply = [](const Matd& x) { return x; };
  id_b = id_a;
  id_b.id = "id.b";
  CHECK(reorder_drift(w, tokens, id_a, id_b) == 0.0);

  const double drift = reorder_drift(w, tokens, attn, mlp);
  CHECK(drift > 0.0);
  CHECK(reorder_drift(w, tokens, attn, mlp) == drift);  // deterministic
  CHECK(reorder_drift(w, tokens, mlp, attn) == drift);  // same pair, same gap

  CHECK_THROWS_WITH_AS(
      reorder_drift(w, tokens, attn, make_mlp_sublayer(w, 2)),
      doctest::Contains("unsupported-intervention"), Error);
  CHECK_THROWS_WITH_AS(
      reorder_drift(w, tokens, make_attention_head(w, 1, 0), mlp),
      doctest::Contains("unsupported-intervention"), Error);
}

TEST_CASE("delta_drift_correlation: exact linear relation and fixtures") {
  std::vector<CommutatorRecord> recs;
  for (double d : {0.05, 0.2, 0.11, 0.4, 0.32}) {
    CommutatorRecord r;
    r.module_a = "a";
    r.module_b = "b";
    r.delta_fro = d;
    r.drift = 2.0 * d;
    recs.push_back(r);
  }
  const auto corr = delta_drift_correlation(recs);
  CHECK(corr.spearman == doctest::Approx(1.0));
  CHECK(corr.pearson == doctest::Approx(1.0));
  CHECK(corr.theil_sen == doctest::Approx(2.0));
  CHECK_FALSE(corr.degenerate);

  // The published drift-vs-delta scatter is monotone.
  const std::vector<std::pair<double, double>> points{
      {0.02, 0.01}, {0.08, 0.04}, {0.31, 0.18},
      {0.35, 0.22}, {0.07, 0.03}, {0.29, 0.17}};
  std::vector<CommutatorRecord> fig;
  for (const auto& [d, dr] : points) {
    CommutatorRecord r;
    r.delta_fro = d;
    r.drift = dr;
    fig.push_back(r);
  }
  CHECK(delta_drift_correlation(fig).spearman == doctest::Approx(1.0));

  std::vector<CommutatorRecord> flat = recs;
  for (auto& r : flat) r.drift = 1.0;
  const auto degen = delta_drift_correlation(flat);
  CHECK(degen.degenerate);
  CHECK(std::isnan(degen.pearson));
  CHECK_FALSE(degen.warning.empty());

  CHECK_THROWS_WITH_AS(delta_drift_correlation({recs[0], recs[1]}),
                       doctest::Contains("insufficient-data"), Error);
}

TEST_CASE("noisy linear drift keeps Spearman above 0.9") {
  const ModelWeights<double> w = init_model<double>(tiny_spec(), 17);
  std::vector<std::vector<int>> seqs;
  SeededRng seq_rng(18);
  for (int s = 0; s < 6; ++s) {
    std::vector<int> seq;
    for (int t = 0; t < 8; ++t)
      seq.push_back(static_cast<int>(seq_rng.uniform_int(16)));
    seqs.push_back(std::move(seq));
  }

  // Delta values across layers and granularities; synthetic drift 2*delta
  // plus 1%-of-max noise, the regime the correlation is supposed to survive.
  std::vector<CommutatorRecord> recs;
  for (int l = 0; l < 3; ++l) {
    const auto batch = collect_residuals(w, seqs, l);
    const std::vector<Submodule> mods{
        make_attention_head(w, l, 0), make_attention_head(w, l, 1),
        make_attention_sublayer(w, l), make_mlp_sublayer(w, l)};
    const auto map = commutator_map(mods, batch, "layer" + std::to_string(l));
    recs.insert(recs.end(), map.records.begin(), map.records.end());
  }
  double max_delta = 0;
  for (const auto& r : recs) max_delta = std::max(max_delta, r.delta_fro);
  REQUIRE(max_delta > 0.0);
  SeededRng noise(19);
  for (auto& r : recs)
    r.drift = 2.0 * r.delta_fro + 0.01 * max_delta * noise.normal();
  const auto corr = delta_drift_correlation(recs);
  CHECK(corr.spearman >= 0.9);
  CHECK(corr.theil_sen == doctest::Approx(2.0).epsilon(0.15));
}
