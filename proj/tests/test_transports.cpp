#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "wilson/transports.hpp"

using namespace wilson;

namespace {

ModelSpec tiny_spec() {
  ModelSpec s;
  s.d_model = 8;
  s.n_heads = 2;
  s.n_layers = 2;
  s.d_ff = 16;
  s.vocab = 16;
  s.max_t = 8;
  return s;
}

std::vector<int> tokens8() { return {3, 1, 4, 1, 5, 9, 2, 6}; }

double rel_err(const Vecd& got, const Vecd& want) {
  const double scale = std::max(want.norm(), 1e-12);
  return (got - want).norm() / scale;
}

}  // namespace

TEST_CASE("layernorm jvp matches central differences") {
  SeededRng rng(31);
  const Index d = 8;
  Vecd x(d), v(d), scale(d), offset(d);
  for (Index k = 0; k < d; ++k) {
    x[k] = rng.normal();
    v[k] = rng.normal();
    scale[k] = 1.0 + 0.1 * rng.normal();
    offset[k] = rng.normal();
  }
  auto f = [&](const Vecd& u) {
    Matd row(1, d);
    row.row(0) = u;
    return Vecd(layernorm_rows<double>(row, scale, offset).row(0));
  };
  const Vecd got = layernorm_row_jvp<double>(x, v, scale);
  const Vecd want = oracles::central_diff_jvp(f, x, v);
  CHECK(rel_err(got, want) < 1e-8);
}

TEST_CASE("softmax jvp matches central differences") {
  SeededRng rng(32);
  const Index n = 6;
  Vecd s(n), ds(n);
  for (Index k = 0; k < n; ++k) {
    s[k] = rng.normal();
    ds[k] = rng.normal();
  }
  auto softmax = [&](const Vecd& z) {
    const Vecd e = (z.array() - z.maxCoeff()).exp();
    return Vecd(e / e.sum());
  };
  const Vecd alpha = softmax(s);
  const Vecd got = softmax_row_jvp<double>(alpha, ds, n);
  const Vecd want = oracles::central_diff_jvp(softmax, s, ds, 1e-6);
  CHECK((got - want).norm() < 1e-8);
}

TEST_CASE("horizontal transport matches finite differences") {
  const auto w = init_model(tiny_spec(), 41);
  const auto trace = forward(w, tokens8());
  SeededRng rng(42);

  int cases = 0;
  for (int layer = 0; layer < 2; ++layer) {
    for (Index i = 0; i < 8; i += 2) {
      for (Index j = 0; j <= i; j += 3) {
        Vecd v(8);
        for (Index k = 0; k < 8; ++k) v[k] = rng.normal();
        const Vecd got = jvp_horizontal(w, trace, i, j, layer, v);
        const auto f = oracles::horizontal_map(&w, trace.h[layer], i, j, layer);
        const Vecd want = oracles::central_diff_jvp(f, trace.h[layer].row(j), v);
        CHECK(rel_err(got, want) < 1e-6);
        ++cases;
      }
    }
  }
  CHECK(cases >= 10);
}

TEST_CASE("vertical transport matches finite differences") {
  const auto w = init_model(tiny_spec(), 43);
  const auto trace = forward(w, tokens8());
  SeededRng rng(44);

  for (int layer = 0; layer < 2; ++layer) {
    for (Index i = 0; i < 8; i += 2) {
      Vecd v(8);
      for (Index k = 0; k < 8; ++k) v[k] = rng.normal();
      const Vecd got = jvp_vertical(w, trace, i, layer, v);
      const auto f = oracles::vertical_map(&w, trace.h[layer], i, layer);
      const Vecd want = oracles::central_diff_jvp(f, trace.h[layer].row(i), v);
      CHECK(rel_err(got, want) < 1e-6);
    }
  }
}

TEST_CASE("zeroed sublayers: vertical is the exact identity, horizontal vanishes") {
  auto w = init_model(tiny_spec(), 45);
  for (auto& lw : w.layers) {
    lw.w_o.setZero();
    lw.w2.setZero();
  }
  const auto trace = forward(w, tokens8());
  SeededRng rng(46);
  Vecd v(8);
  for (Index k = 0; k < 8; ++k) v[k] = rng.normal();

  const Vecd vert = jvp_vertical(w, trace, 5, 0, v);
  CHECK((vert - v).cwiseAbs().maxCoeff() == 0.0);

  const Vecd horiz = jvp_horizontal(w, trace, 5, 2, 0, v);
  CHECK(horiz.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("jvp is linear in the tangent at a fixed base point") {
  const auto w = init_model(tiny_spec(), 47);
  const auto trace = forward(w, tokens8());
  SeededRng rng(48);
  Vecd v1(8), v2(8);
  for (Index k = 0; k < 8; ++k) {
    v1[k] = rng.normal();
    v2[k] = rng.normal();
  }
  const double a = 2.5, b = -0.75;

  const Vecd lhs_h = jvp_horizontal(w, trace, 6, 3, 1, Vecd(a * v1 + b * v2));
  const Vecd rhs_h = a * jvp_horizontal(w, trace, 6, 3, 1, v1) +
                     b * jvp_horizontal(w, trace, 6, 3, 1, v2);
  CHECK(rel_err(lhs_h, rhs_h) < 1e-12);

  const Vecd lhs_v = jvp_vertical(w, trace, 4, 0, Vecd(a * v1 + b * v2));
  const Vecd rhs_v = a * jvp_vertical(w, trace, 4, 0, v1) +
                     b * jvp_vertical(w, trace, 4, 0, v2);
  CHECK(rel_err(lhs_v, rhs_v) < 1e-12);
}

TEST_CASE("frozen-alpha jvp equals the frozen transport matrix action") {
  const auto w = init_model(tiny_spec(), 49);
  const auto trace = forward(w, tokens8());
  SeededRng rng(50);

  for (int layer = 0; layer < 2; ++layer) {
    for (auto [i, j] : std::vector<std::pair<Index, Index>>{
             {3, 1}, {5, 5}, {7, 0}, {6, 4}}) {
      Vecd v(8);
      for (Index k = 0; k < 8; ++k) v[k] = rng.normal();
      const Vecd via_jvp =
          jvp_horizontal(w, trace, i, j, layer, v, HorizontalMode::frozen_alpha);
      const Matd t = frozen_attn_transport(w, trace, i, j, layer);
      CHECK((via_jvp - t * v).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }
}

TEST_CASE("masked attention edges are rejected") {
  const auto w = init_model(tiny_spec(), 51);
  const auto trace = forward(w, tokens8());
  const Vecd v = Vecd::Ones(8);
  CHECK_THROWS_AS(jvp_horizontal(w, trace, 2, 5, 0, v), Error);
  CHECK_THROWS_AS(frozen_attn_transport(w, trace, 2, 5, 0), Error);
  try {
    jvp_horizontal(w, trace, 2, 5, 0, v);
  } catch (const Error& e) {
    CHECK(e.kind() == "masked-edge");
  }
}

TEST_CASE("dense jacobian assembled from jvps matches finite differences") {
  const auto w = init_model(tiny_spec(), 53);
  const auto trace = forward(w, tokens8());
  const Index i = 6, j = 2;
  const int layer = 1;

  const Matd via_jvp = oracles::assemble_operator(
      [&](const Vecd& e) { return jvp_horizontal(w, trace, i, j, layer, e); },
      8);
  const auto f = oracles::horizontal_map(&w, trace.h[layer], i, j, layer);
  const Matd via_fd = oracles::central_diff_jacobian(f, trace.h[layer].row(j));
  CHECK((via_jvp - via_fd).cwiseAbs().maxCoeff() < 1e-5);

  const Matd vert_jvp = oracles::assemble_operator(
      [&](const Vecd& e) { return jvp_vertical(w, trace, i, layer, e); }, 8);
  const auto g = oracles::vertical_map(&w, trace.h[layer], i, layer);
  const Matd vert_fd = oracles::central_diff_jacobian(g, trace.h[layer].row(i));
  CHECK((vert_jvp - vert_fd).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("self-edge with suppressed self-attention: only the query path remains") {
  const auto w = init_model(tiny_spec(), 55);
  auto trace = forward(w, tokens8());
  const Index i = 6;
  const int layer = 0;

  // Pin the linearization point: zero out alpha(i, i) and renormalize, so the
  // value path through position i is dead and any response must come from the
  // softmax/query sensitivity.
  for (int hh = 0; hh < w.spec.n_heads; ++hh) {
    auto& al = trace.alpha[layer][hh];
    al(i, i) = 0.0;
    al.row(i) /= al.row(i).sum();
  }

  SeededRng rng(56);
  Vecd v(8);
  for (Index k = 0; k < 8; ++k) v[k] = rng.normal();

  const Vecd frozen =
      jvp_horizontal(w, trace, i, i, layer, v, HorizontalMode::frozen_alpha);
  CHECK(frozen.cwiseAbs().maxCoeff() <= 1e-15);  // value path suppressed

  const Vecd full = jvp_horizontal(w, trace, i, i, layer, v);
  CHECK(full.norm() > 1e-6);  // query/LN path still transports
}

TEST_CASE("transport argument validation") {
  const auto w = init_model(tiny_spec(), 57);
  const auto trace = forward(w, tokens8());
  const Vecd v = Vecd::Ones(8);
  CHECK_THROWS_AS(jvp_horizontal(w, trace, 1, 0, 9, v), Error);
  CHECK_THROWS_AS(jvp_vertical(w, trace, 99, 0, v), Error);
  CHECK_THROWS_AS(jvp_vertical(w, trace, 1, 0, Vecd(Vecd::Ones(5))), Error);
}
