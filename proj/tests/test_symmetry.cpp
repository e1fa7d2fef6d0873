#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "wilson/symmetry.hpp"

#include <numeric>
#include <vector>

using namespace wilson;

namespace {

ModelSpec base_spec(PositionalMode mode) {
  ModelSpec spec;
  spec.d_model = 16;
  spec.n_heads = 2;
  spec.n_layers = 2;
  spec.d_ff = 32;
  spec.vocab = 32;
  spec.max_t = 16;
  spec.positional_mode = mode;
  return spec;
}

std::vector<int> random_tokens(Index n, SeededRng& rng, int vocab = 32) {
  std::vector<int> t;
  for (Index i = 0; i < n; ++i)
    t.push_back(static_cast<int>(rng.uniform_int(
        static_cast<std::uint64_t>(vocab))));
  return t;
}

std::vector<Index> random_perm(Index n, SeededRng& rng) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), Index{0});
  rng.shuffle(p);
  return p;
}

}  // namespace

TEST_CASE("perm_equivariance: exact without positions or mask") {
  const auto w = init_model<double>(base_spec(PositionalMode::none), 5);
  SeededRng rng(1);
  for (int input = 0; input < 5; ++input) {
    const auto tokens = random_tokens(10, rng);
    for (int trial = 0; trial < 20; ++trial) {
      const auto perm = random_perm(10, rng);
      const auto res = perm_equivariance(w, tokens, perm, MaskKind::none);
      CHECK(res.epsilon_pi <= 1e-9);
      CHECK(res.context_len == 10);
    }
  }
}

TEST_CASE("perm_equivariance: identity permutation is exactly zero") {
  const auto w = init_model<double>(base_spec(PositionalMode::rope), 5);
  std::vector<Index> identity(8);
  std::iota(identity.begin(), identity.end(), Index{0});
  const auto res = perm_equivariance(w, {3, 1, 4, 1, 5, 9, 2, 6}, identity,
                                     MaskKind::causal);
  CHECK(res.epsilon_pi == 0.0);
}

TEST_CASE("perm_equivariance: the causal mask breaks it measurably") {
  const auto w = init_model<double>(base_spec(PositionalMode::none), 5);
  SeededRng rng(2);
  // The mask-sensitivity curve across context lengths; every point must show
  // a real violation, not rounding noise.
  for (Index n : {Index{4}, Index{8}, Index{16}}) {
    const auto tokens = random_tokens(n, rng);
    std::vector<Index> perm = random_perm(n, rng);
    while (std::is_sorted(perm.begin(), perm.end())) perm = random_perm(n, rng);
    const auto res = perm_equivariance(w, tokens, perm, MaskKind::causal);
    CHECK(res.epsilon_pi > 0.01);
    CHECK(res.mask == MaskKind::causal);
  }
}

TEST_CASE("perm_equivariance: rejects non-permutations") {
  const auto w = init_model<double>(base_spec(PositionalMode::none), 5);
  CHECK_THROWS_WITH_AS(
      perm_equivariance(w, {1, 2, 3}, {0, 1}, MaskKind::none),
      doctest::Contains("invalid-permutation"), Error);
  CHECK_THROWS_WITH_AS(
      perm_equivariance(w, {1, 2, 3}, {0, 1, 1}, MaskKind::none),
      doctest::Contains("invalid-permutation"), Error);
}

TEST_CASE("rope_drift: zero offset is exactly flat, drift grows with offset") {
  const auto w = init_model<double>(base_spec(PositionalMode::rope), 7);
  SeededRng rng(3);
  std::vector<std::vector<int>> inputs;
  for (int k = 0; k < 3; ++k) inputs.push_back(random_tokens(12, rng));

  const auto curve = rope_drift(w, inputs, default_offset_sweep());
  REQUIRE(curve.offsets.size() == 11);
  REQUIRE(curve.distances.rows() == 2);

  const auto zero_col = static_cast<Index>(
      std::find(curve.offsets.begin(), curve.offsets.end(), 0.0) -
      curve.offsets.begin());
  for (int l = 0; l < 2; ++l) CHECK(curve.distances(l, zero_col) == 0.0);
  CHECK(curve.distances.minCoeff() >= 0.0);

  // Magnitude curve: strictly more phase, at least as much drift.
  const auto at = [&](double m) {
    for (std::size_t k = 0; k < curve.magnitudes.size(); ++k)
      if (curve.magnitudes[k] == m) return curve.mean_distance[k];
    FAIL("magnitude missing from curve");
    return 0.0;
  };
  CHECK(at(0.0) == 0.0);
  CHECK(at(0.2) >= at(0.05));
  CHECK(area_up_to(curve, 0.2) >= area_up_to(curve, 0.05));
  CHECK(curve.area_under_drift == doctest::Approx(area_up_to(curve, 0.2)));
  CHECK(curve.area_under_drift > 0.0);
}

TEST_CASE("rope_drift: symmetric KL option and validation") {
  const auto w = init_model<double>(base_spec(PositionalMode::rope), 7);
  SeededRng rng(4);
  const std::vector<std::vector<int>> inputs{random_tokens(8, rng)};
  const auto curve =
      rope_drift(w, inputs, {0.0, 0.1}, DriftDistance::sym_kl);
  const auto zero_col = curve.offsets[0] == 0.0 ? 0 : 1;
  CHECK(curve.distances(0, zero_col) == 0.0);
  CHECK(curve.distances.minCoeff() >= 0.0);

  CHECK_THROWS_WITH_AS(rope_drift(w, inputs, {0.1, 0.2}),
                       doctest::Contains("sweep must include offset 0"), Error);
  const auto flat = init_model<double>(base_spec(PositionalMode::none), 7);
  CHECK_THROWS_WITH_AS(rope_drift(flat, inputs, {0.0, 0.1}),
                       doctest::Contains("invalid-argument"), Error);
}

TEST_CASE("mlp_perm_check: compensated permutations are a true symmetry") {
  const auto w = init_model<double>(base_spec(PositionalMode::rope), 11);
  SeededRng rng(5);
  std::vector<std::vector<int>> inputs;
  for (int k = 0; k < 3; ++k) inputs.push_back(random_tokens(8, rng));

  std::vector<Index> identity(32);
  std::iota(identity.begin(), identity.end(), Index{0});
  CHECK(mlp_perm_check(w, inputs, identity) == 0.0);

  for (int trial = 0; trial < 20; ++trial) {
    const auto perm = random_perm(32, rng);
    CHECK(mlp_perm_check(w, inputs, perm) <= 1e-10);
  }

  // Negative control: dropping the compensation must visibly change outputs.
  auto perm = random_perm(32, rng);
  while (std::is_sorted(perm.begin(), perm.end())) perm = random_perm(32, rng);
  CHECK(mlp_perm_check(w, inputs, perm, false) > 1e-3);
}

TEST_CASE("head_mix_check: value-path mixing is absorbed exactly") {
  const auto w = init_model<double>(base_spec(PositionalMode::rope), 13);
  SeededRng rng(6);
  std::vector<std::vector<int>> inputs;
  for (int k = 0; k < 3; ++k) inputs.push_back(random_tokens(8, rng));

  const std::vector<Matd> identity{Matd::Identity(8, 8), Matd::Identity(8, 8)};
  CHECK(head_mix_check(w, inputs, identity) == 0.0);

  std::vector<Matd> scalars{Matd(3.0 * Matd::Identity(8, 8)),
                            Matd(0.25 * Matd::Identity(8, 8))};
  CHECK(head_mix_check(w, inputs, scalars) <= 1e-9);

  std::vector<Matd> generic;
  for (int hh = 0; hh < 2; ++hh) {
    Matd g(8, 8);
    for (Index i = 0; i < 8; ++i)
      for (Index j = 0; j < 8; ++j) g(i, j) = rng.normal() * 0.3;
    g += Matd::Identity(8, 8);  // keep it comfortably invertible
    generic.push_back(g);
  }
  CHECK(head_mix_check(w, inputs, generic) <= 1e-9);

  // Touching the score path breaks exactness — the absorption is value-only.
  CHECK(head_mix_check(w, inputs, generic, true) > 1e-6);

  std::vector<Matd> singular{Matd::Zero(8, 8), Matd::Identity(8, 8)};
  CHECK_THROWS_WITH_AS(head_mix_check(w, inputs, singular),
                       doctest::Contains("invalid-mix"), Error);
}
