#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "wilson/model.hpp"

using namespace wilson;

namespace {

std::vector<int> ramp_tokens(int n, int lo = 2) {
  std::vector<int> t(n);
  for (int i = 0; i < n; ++i) t[i] = lo + (i % 16);
  return t;
}

ModelSpec small_spec() {
  ModelSpec s;
  s.d_model = 16;
  s.n_heads = 2;
  s.n_layers = 2;
  s.d_ff = 32;
  s.vocab = 32;
  s.max_t = 12;
  return s;
}

}  // namespace

TEST_CASE("sha256 known-answer vectors") {
  CHECK(sha256_hex(std::string("")) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex(std::string("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  // Two-block message (> 55 bytes forces the 128-byte padding path).
  CHECK(sha256_hex(std::string(
            "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq")) ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("init_model is deterministic in (spec, seed)") {
  const ModelSpec spec;  // defaults
  const auto w1 = init_model(spec, 0);
  const auto w2 = init_model(spec, 0);
  const auto w3 = init_model(spec, 1);
  CHECK(model_hash(w1) == model_hash(w2));
  CHECK(model_hash(w1) != model_hash(w3));
  CHECK(model_id(w1).size() == 12);
}

TEST_CASE("spec validation rejects bad dimensions") {
  ModelSpec s;
  s.d_model = 30;
  s.n_heads = 4;
  CHECK_THROWS_AS(init_model(s, 0), Error);

  ModelSpec odd;
  odd.d_model = 12;
  odd.n_heads = 4;  // d_head 3, odd: no rotary pairs
  odd.positional_mode = PositionalMode::rope;
  CHECK_THROWS_AS(init_model(odd, 0), Error);
  odd.positional_mode = PositionalMode::none;
  CHECK_NOTHROW(init_model(odd, 0));
}

TEST_CASE("forward: trace shapes, masking, and attention normalization") {
  const auto w = init_model(small_spec(), 3);
  const auto tokens = ramp_tokens(8);
  const auto trace = forward(w, tokens);

  REQUIRE(trace.h.size() == 3);
  CHECK(trace.h[0].rows() == 8);
  CHECK(trace.h[0].cols() == 16);
  CHECK(trace.logits.rows() == 8);
  CHECK(trace.logits.cols() == 32);

  for (int l = 0; l < 2; ++l) {
    for (int hh = 0; hh < 2; ++hh) {
      const Matd& al = trace.alpha[l][hh];
      for (Index i = 0; i < 8; ++i) {
        CHECK(al.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
        for (Index j = i + 1; j < 8; ++j) CHECK(al(i, j) == 0.0);  // causal
        for (Index j = 0; j <= i; ++j) CHECK(al(i, j) >= 0.0);
      }
    }
  }
}

TEST_CASE("forward: residual decomposition is exact") {
  const auto w = init_model(small_spec(), 5);
  const auto tokens = ramp_tokens(7);
  const auto trace = forward(w, tokens);

  for (int l = 0; l < w.spec.n_layers; ++l) {
    const auto attn = attention_sublayer(w, l, trace.h[l]);
    const Matd mid = trace.h[l] + attn.output;
    const Matd next = mid + mlp_sublayer(w, l, mid);
    CHECK((next - trace.h[l + 1]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("forward: residual norms stay bounded and finite") {
  const auto w = init_model(ModelSpec{}, 0);
  const auto trace = forward(w, ramp_tokens(16));
  for (const auto& h : trace.h) {
    CHECK(h.allFinite());
    for (Index i = 0; i < h.rows(); ++i) CHECK(h.row(i).norm() < 100.0);
  }
}

TEST_CASE("forward: input validation") {
  const auto w = init_model(small_spec(), 1);
  CHECK_THROWS_AS(forward(w, {}), Error);
  CHECK_THROWS_AS(forward(w, ramp_tokens(13)), Error);  // max_t 12
  CHECK_THROWS_AS(forward(w, {0, 1, 99}), Error);       // vocab 32
  try {
    forward(w, {0, 1, 99});
  } catch (const Error& e) {
    CHECK(e.kind() == "invalid-token");
  }
}

TEST_CASE("zeroed sublayer outputs make every block the identity") {
  auto w = init_model(small_spec(), 7);
  for (auto& lw : w.layers) {
    lw.w_o.setZero();
    lw.w2.setZero();
  }
  const auto trace = forward(w, ramp_tokens(6));
  for (int l = 1; l <= w.spec.n_layers; ++l)
    CHECK((trace.h[l] - trace.h[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rotary scores depend only on relative offset for repeated tokens") {
  ModelSpec spec = small_spec();
  spec.positional_mode = PositionalMode::rope;
  const auto w = init_model(spec, 11);
  const std::vector<int> same(10, 9);  // identical content at every position
  const auto trace = forward(w, same);

  for (int l = 0; l < spec.n_layers; ++l) {
    // Scores at layer 0 see identical post-LN rows at every position, so
    // s(i, j) must match s(i+1, j+1) exactly up to float noise. Deeper layers
    // mix position-dependent context, so only layer 0 is checked.
    if (l > 0) break;
    for (int hh = 0; hh < spec.n_heads; ++hh) {
      const Matd& sc = trace.scores[l][hh];
      for (Index i = 0; i + 1 < 10; ++i)
        for (Index j = 0; j + 1 <= i; ++j)
          CHECK(std::abs(sc(i, j) - sc(i + 1, j + 1)) <= 1e-9);
    }
  }
}

TEST_CASE("no positions + no mask: repeated tokens attend uniformly") {
  ModelSpec spec = small_spec();
  spec.positional_mode = PositionalMode::none;
  const auto w = init_model(spec, 13);
  ForwardOptions opts;
  opts.causal = false;
  const std::vector<int> same(8, 4);
  const auto trace = forward(w, same, opts);
  const Matd& al = trace.alpha[0][0];
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 8; ++j)
      CHECK(al(i, j) == doctest::Approx(1.0 / 8.0).epsilon(1e-12));
}

TEST_CASE("weight container round-trips bit-exactly") {
  const auto w = init_model(small_spec(), 17);
  const auto bytes = serialize_weights(w);
  const auto w2 = deserialize_weights<double>(bytes);
  CHECK(model_hash(w) == model_hash(w2));

  const auto t1 = forward(w, ramp_tokens(5));
  const auto t2 = forward(w2, ramp_tokens(5));
  CHECK((t1.logits - t2.logits).cwiseAbs().maxCoeff() == 0.0);

  const std::string path = "/tmp/wilson_test_weights.bin";
  save_weights(w, path);
  const auto w3 = load_weights<double>(path);
  CHECK(model_hash(w) == model_hash(w3));
  std::remove(path.c_str());
}

TEST_CASE("weight container rejects corruption") {
  const auto w = init_model(small_spec(), 19);
  auto bytes = serialize_weights(w);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_weights<double>(bad_magic), Error);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 16);
  CHECK_THROWS_AS(deserialize_weights<double>(truncated), Error);

  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(deserialize_weights<double>(trailing), Error);

  try {
    deserialize_weights<double>(bad_magic);
  } catch (const Error& e) {
    CHECK(e.kind() == "corrupt-container");
  }
}

TEST_CASE("argmax tie rule picks the lowest token id") {
  Vecd v(3);
  v << 0.5, 0.5, 0.1;
  CHECK(argmax_lowest(v) == 0);
  v << 0.1, 0.7, 0.7;
  CHECK(argmax_lowest(v) == 1);
  v << 0.1, 0.2, 0.9;
  CHECK(argmax_lowest(v) == 2);
}

TEST_CASE("single-precision instantiation runs and stays finite") {
  const auto w = init_model<float>(small_spec(), 23);
  const auto trace = forward(w, ramp_tokens(6));
  CHECK(trace.logits.allFinite());
  static_assert(std::is_same_v<decltype(trace.logits(0, 0)), const float&>);
}

TEST_CASE("gelu tanh matches its analytic derivative by central differences") {
  for (double x : {-3.0, -1.0, -0.1, 0.0, 0.5, 2.0}) {
    const double eps = 1e-6;
    const double num = (gelu_tanh(x + eps) - gelu_tanh(x - eps)) / (2 * eps);
    CHECK(gelu_tanh_grad(x) == doctest::Approx(num).epsilon(1e-7));
  }
}
