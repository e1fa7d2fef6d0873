#pragma once

// Built-in reference transformer: decoder-only, pre-LN residual blocks,
// rotary positions on q/k, causal multi-head attention, 2-layer GELU MLP.
// Everything is deterministic given (spec, seed); the weight container
// serializes to a flat little-endian float64 payload whose SHA-256 is the
// model's identity in logs and manifests.
//
// The residual decomposition is load-bearing for the diagnostics built on
// top:  h_{l+1} = h_l + attn_out + mlp_out,  with LayerNorm Jacobians owned
// by their sublayers. Keep it exact.

#include "wilson/numerics.hpp"
#include "wilson/sha256.hpp"

#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

namespace wilson {

enum class PositionalMode { none, rope };

struct ModelSpec {
  int d_model = 32;
  int n_heads = 4;
  int n_layers = 4;
  int d_ff = 128;
  int vocab = 64;
  int max_t = 16;
  double rope_base = 10000.0;
  PositionalMode positional_mode = PositionalMode::rope;

  int d_head() const { return d_model / n_heads; }

  void validate() const {
    if (d_model <= 0 || n_heads <= 0 || n_layers <= 0 || d_ff <= 0 ||
        vocab <= 0 || max_t <= 0)
      raise("invalid-dimension", "model spec fields must be positive");
    if (d_model % n_heads != 0)
      raise("invalid-dimension", "d_model must be divisible by n_heads");
    if (positional_mode == PositionalMode::rope && d_head() % 2 != 0)
      raise("invalid-dimension", "rotary positions need an even head dimension");
    if (rope_base <= 1.0)
      raise("invalid-argument", "rope_base must exceed 1");
  }
};

template <class S>
struct LayerWeights {
  Mat<S> w_q, w_k, w_v, w_o;  // d_model x d_model; head h owns column block
                              // [h*d_head, (h+1)*d_head) of w_q/w_k/w_v and
                              // the matching row block of w_o
  Vec<S> ln1_scale, ln1_offset;
  Vec<S> ln2_scale, ln2_offset;
  Mat<S> w1;  // d_model x d_ff
  Mat<S> w2;  // d_ff x d_model
};

template <class S>
struct ModelWeights {
  ModelSpec spec;
  Mat<S> embed;    // vocab x d_model
  Mat<S> unembed;  // d_model x vocab
  std::vector<LayerWeights<S>> layers;
};

using ModelWeightsD = ModelWeights<double>;

namespace detail {

// Fill order is part of the serialization contract: row-major within each
// matrix, matrices in declaration order.
template <class S>
void fill_normal(Mat<S>& m, Index rows, Index cols, double stddev,
                 SeededRng& rng) {
  m.resize(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      m(i, j) = static_cast<S>(stddev * rng.normal());
}

}  // namespace detail

template <class S = double>
ModelWeights<S> init_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  SeededRng rng(seed);
  ModelWeights<S> w;
  w.spec = spec;
  const double wstd = 1.0 / std::sqrt(static_cast<double>(spec.d_model));
  detail::fill_normal(w.embed, spec.vocab, spec.d_model, 1.0, rng);
  w.layers.resize(spec.n_layers);
  for (auto& layer : w.layers) {
    detail::fill_normal(layer.w_q, spec.d_model, spec.d_model, wstd, rng);
    detail::fill_normal(layer.w_k, spec.d_model, spec.d_model, wstd, rng);
    detail::fill_normal(layer.w_v, spec.d_model, spec.d_model, wstd, rng);
    detail::fill_normal(layer.w_o, spec.d_model, spec.d_model, wstd, rng);
    layer.ln1_scale = Vec<S>::Ones(spec.d_model);
    layer.ln1_offset = Vec<S>::Zero(spec.d_model);
    layer.ln2_scale = Vec<S>::Ones(spec.d_model);
    layer.ln2_offset = Vec<S>::Zero(spec.d_model);
    detail::fill_normal(layer.w1, spec.d_model, spec.d_ff, wstd, rng);
    detail::fill_normal(layer.w2, spec.d_ff, spec.d_model,
                        1.0 / std::sqrt(static_cast<double>(spec.d_ff)), rng);
  }
  detail::fill_normal(w.unembed, spec.d_model, spec.vocab, wstd, rng);
  return w;
}

inline constexpr double kLayerNormEps = 1e-5;

// Row-wise LayerNorm with population variance.
template <class S>
Mat<S> layernorm_rows(const Mat<S>& x, const Vec<S>& scale,
                      const Vec<S>& offset) {
  Mat<S> y(x.rows(), x.cols());
  const Index d = x.cols();
  for (Index i = 0; i < x.rows(); ++i) {
    const S mu = x.row(i).mean();
    const S var = (x.row(i).array() - mu).square().sum() / static_cast<S>(d);
    const S inv = S(1) / std::sqrt(var + static_cast<S>(kLayerNormEps));
    y.row(i) = ((x.row(i).array() - mu) * inv).transpose().array() *
                   scale.array() +
               offset.array();
  }
  return y;
}

template <class S>
S gelu_tanh(S x) {
  const S c = static_cast<S>(0.7978845608028653558798921198687637);  // sqrt(2/pi)
  const S inner = c * (x + static_cast<S>(0.044715) * x * x * x);
  return static_cast<S>(0.5) * x * (S(1) + std::tanh(inner));
}

template <class S>
S gelu_tanh_grad(S x) {
  const S c = static_cast<S>(0.7978845608028653558798921198687637);
  const S inner = c * (x + static_cast<S>(0.044715) * x * x * x);
  const S t = std::tanh(inner);
  const S dinner = c * (S(1) + static_cast<S>(3 * 0.044715) * x * x);
  return static_cast<S>(0.5) * (S(1) + t) +
         static_cast<S>(0.5) * x * (S(1) - t * t) * dinner;
}

// Rotation angle of rotary pair `pair` at position `pos`.
inline double rope_angle(const ModelSpec& spec, Index pos, Index pair) {
  const double exponent =
      -2.0 * static_cast<double>(pair) / static_cast<double>(spec.d_head());
  return static_cast<double>(pos) * std::pow(spec.rope_base, exponent);
}

// In-place rotary rotation of one head-row (length d_head), pairs (2t, 2t+1).
template <class S>
void rope_rotate_row(const ModelSpec& spec, Index pos, S* head_row,
                     double phase_offset) {
  const int pairs = spec.d_head() / 2;
  for (int t = 0; t < pairs; ++t) {
    const double ang = rope_angle(spec, pos, t) + phase_offset;
    const S c = static_cast<S>(std::cos(ang));
    const S s = static_cast<S>(std::sin(ang));
    const S a = head_row[2 * t];
    const S b = head_row[2 * t + 1];
    head_row[2 * t] = c * a - s * b;
    head_row[2 * t + 1] = s * a + c * b;
  }
}

struct ForwardOptions {
  bool causal = true;
  // Extra phase added to the *query* rotations only; adding it to both sides
  // would cancel in the relative phase and perturb nothing.
  double rope_phase_offset = 0.0;
};

template <class S>
struct AttentionResult {
  Mat<S> output;                    // T x d_model, before the residual add
  std::vector<Mat<S>> alpha;        // per head, T x T row-stochastic
  std::vector<Mat<S>> scores;       // per head, pre-softmax (masked = -inf)
};

// Attention sublayer on pre-LN residuals `h` (T x d_model): LN1 -> q/k/v ->
// rotary -> masked softmax -> value mix -> w_o. If `frozen_alpha` is given,
// score computation is skipped and the supplied attention pattern is used.
template <class S>
AttentionResult<S> attention_sublayer(const ModelWeights<S>& w, int layer,
                                      const Mat<S>& h,
                                      const ForwardOptions& opts = {},
                                      const std::vector<Mat<S>>* frozen_alpha =
                                          nullptr) {
  const ModelSpec& spec = w.spec;
  if (layer < 0 || layer >= spec.n_layers)
    raise("invalid-argument", "attention_sublayer: layer out of range");
  const Index t_len = h.rows();
  const Index d = spec.d_model;
  const int dh = spec.d_head();
  if (h.cols() != d) raise("invalid-dimension", "residual width != d_model");
  const LayerWeights<S>& lw = w.layers[layer];

  const Mat<S> x = layernorm_rows(h, lw.ln1_scale, lw.ln1_offset);
  Mat<S> q = x * lw.w_q;
  Mat<S> k = x * lw.w_k;
  const Mat<S> v = x * lw.w_v;

  if (spec.positional_mode == PositionalMode::rope) {
    for (Index i = 0; i < t_len; ++i) {
      for (int hh = 0; hh < spec.n_heads; ++hh) {
        // Row-major temp: Eigen matrices are column-major, so copy the block.
        Vec<S> qrow = q.row(i).segment(hh * dh, dh);
        Vec<S> krow = k.row(i).segment(hh * dh, dh);
        rope_rotate_row(spec, i, qrow.data(), opts.rope_phase_offset);
        rope_rotate_row(spec, i, krow.data(), 0.0);
        q.row(i).segment(hh * dh, dh) = qrow;
        k.row(i).segment(hh * dh, dh) = krow;
      }
    }
  }

  AttentionResult<S> res;
  res.alpha.resize(spec.n_heads);
  res.scores.resize(spec.n_heads);
  Mat<S> ctx(t_len, d);
  const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dh));
  const S neg_inf = -std::numeric_limits<S>::infinity();

  for (int hh = 0; hh < spec.n_heads; ++hh) {
    const auto qh = q.middleCols(hh * dh, dh);
    const auto kh = k.middleCols(hh * dh, dh);
    const auto vh = v.middleCols(hh * dh, dh);
    Mat<S> sc = qh * kh.transpose() * inv_sqrt;
    if (opts.causal) {
      for (Index i = 0; i < t_len; ++i)
        for (Index j = i + 1; j < t_len; ++j) sc(i, j) = neg_inf;
    }
    Mat<S> al(t_len, t_len);
    if (frozen_alpha) {
      if ((*frozen_alpha)[hh].rows() != t_len ||
          (*frozen_alpha)[hh].cols() != t_len)
        raise("shape-mismatch", "frozen alpha has wrong shape");
      al = (*frozen_alpha)[hh];
    } else {
      for (Index i = 0; i < t_len; ++i) {
        const Index lim = opts.causal ? i + 1 : t_len;
        S mx = sc(i, 0);
        for (Index j = 1; j < lim; ++j) mx = std::max(mx, sc(i, j));
        S sum = 0;
        for (Index j = 0; j < lim; ++j) {
          al(i, j) = std::exp(sc(i, j) - mx);
          sum += al(i, j);
        }
        for (Index j = 0; j < lim; ++j) al(i, j) /= sum;
        for (Index j = lim; j < t_len; ++j) al(i, j) = S(0);
      }
    }
    ctx.middleCols(hh * dh, dh) = al * vh;
    res.alpha[hh] = std::move(al);
    res.scores[hh] = std::move(sc);
  }
  res.output = ctx * lw.w_o;
  return res;
}

// MLP sublayer on pre-LN residuals: LN2 -> w1 -> GELU(tanh) -> w2.
template <class S>
Mat<S> mlp_sublayer(const ModelWeights<S>& w, int layer, const Mat<S>& h) {
  if (layer < 0 || layer >= w.spec.n_layers)
    raise("invalid-argument", "mlp_sublayer: layer out of range");
  const LayerWeights<S>& lw = w.layers[layer];
  const Mat<S> y = layernorm_rows(h, lw.ln2_scale, lw.ln2_offset);
  Mat<S> hidden = y * lw.w1;
  for (Index i = 0; i < hidden.rows(); ++i)
    for (Index j = 0; j < hidden.cols(); ++j)
      hidden(i, j) = gelu_tanh(hidden(i, j));
  return hidden * lw.w2;
}

template <class S>
struct ActivationTrace {
  std::vector<int> tokens;
  // h[l] is the residual stream entering layer l; h[n_layers] is the final
  // stream. Each is T x d_model.
  std::vector<Mat<S>> h;
  // alpha[l][head] and scores[l][head], both T x T.
  std::vector<std::vector<Mat<S>>> alpha;
  std::vector<std::vector<Mat<S>>> scores;
  Mat<S> logits;  // T x vocab
  Vec<S> final_logits() const { return logits.row(logits.rows() - 1); }
};

using ActivationTraceD = ActivationTrace<double>;

template <class S>
ActivationTrace<S> forward(const ModelWeights<S>& w,
                           const std::vector<int>& tokens,
                           const ForwardOptions& opts = {}) {
  const ModelSpec& spec = w.spec;
  if (tokens.empty())
    raise("invalid-dimension", "forward: empty token sequence");
  if (static_cast<int>(tokens.size()) > spec.max_t)
    raise("invalid-dimension", "forward: sequence longer than max_t");
  for (int tok : tokens)
    if (tok < 0 || tok >= spec.vocab)
      raise("invalid-token", "token id " + std::to_string(tok) +
                                 " outside vocabulary");

  const Index t_len = static_cast<Index>(tokens.size());
  ActivationTrace<S> trace;
  trace.tokens = tokens;
  trace.h.resize(spec.n_layers + 1);
  trace.alpha.resize(spec.n_layers);
  trace.scores.resize(spec.n_layers);

  Mat<S> h(t_len, spec.d_model);
  for (Index i = 0; i < t_len; ++i) h.row(i) = w.embed.row(tokens[i]);
  trace.h[0] = h;

  for (int l = 0; l < spec.n_layers; ++l) {
    AttentionResult<S> attn = attention_sublayer(w, l, h, opts);
    const Mat<S> mid = h + attn.output;
    h = mid + mlp_sublayer(w, l, mid);
    trace.alpha[l] = std::move(attn.alpha);
    trace.scores[l] = std::move(attn.scores);
    trace.h[l + 1] = h;
  }

  trace.logits = h * w.unembed;
  if (!trace.logits.allFinite() || !h.allFinite())
    raise("numeric-overflow", "forward produced non-finite activations");
  return trace;
}

// Argmax with the documented tie rule: exact ties resolve to the lowest
// token id. Near-tie logits do hit exact float equality (see the orbit
// decision tests), so the rule is observable behavior, not dead code.
template <class S>
int argmax_lowest(const Vec<S>& logits) {
  if (logits.size() == 0) raise("invalid-dimension", "argmax of empty vector");
  Index best = 0;
  for (Index i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return static_cast<int>(best);
}

// --- weight container ------------------------------------------------------
//
// Layout: magic "WLTRWT01", seven little-endian int32 spec fields (d_model,
// n_heads, n_layers, d_ff, vocab, max_t, positional_mode), float64 rope_base,
// then the float64 payload in init order (embed, per-layer matrices and LN
// vectors, unembed), each matrix row-major.

inline constexpr char kWeightMagic[8] = {'W', 'L', 'T', 'R', 'W', 'T', '0', '1'};

namespace detail {

inline void put_bytes(std::vector<std::uint8_t>& out, const void* p,
                      std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

inline void put_i32(std::vector<std::uint8_t>& out, std::int32_t v) {
  std::uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = std::uint8_t((std::uint32_t(v) >> (8 * i)) & 0xff);
  put_bytes(out, b, 4);
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  std::uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = std::uint8_t((bits >> (8 * i)) & 0xff);
  put_bytes(out, b, 8);
}

template <class S>
void put_matrix(std::vector<std::uint8_t>& out, const Mat<S>& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      put_f64(out, static_cast<double>(m(i, j)));
}

template <class S>
void put_vector(std::vector<std::uint8_t>& out, const Vec<S>& v) {
  for (Index i = 0; i < v.size(); ++i) put_f64(out, static_cast<double>(v[i]));
}

class ByteReader {
 public:
  ByteReader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}

  void get(void* dst, std::size_t n) {
    if (off_ + n > n_)
      raise("corrupt-container", "weight container truncated");
    std::memcpy(dst, p_ + off_, n);
    off_ += n;
  }

  std::int32_t i32() {
    std::uint8_t b[4];
    get(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
    return static_cast<std::int32_t>(v);
  }

  double f64() {
    std::uint8_t b[8];
    get(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }

  bool exhausted() const { return off_ == n_; }

 private:
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t off_ = 0;
};

template <class S>
void get_matrix(ByteReader& r, Mat<S>& m, Index rows, Index cols) {
  m.resize(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = static_cast<S>(r.f64());
}

template <class S>
void get_vector(ByteReader& r, Vec<S>& v, Index n) {
  v.resize(n);
  for (Index i = 0; i < n; ++i) v[i] = static_cast<S>(r.f64());
}

}  // namespace detail

template <class S>
std::vector<std::uint8_t> serialize_weights(const ModelWeights<S>& w) {
  std::vector<std::uint8_t> out;
  detail::put_bytes(out, kWeightMagic, 8);
  detail::put_i32(out, w.spec.d_model);
  detail::put_i32(out, w.spec.n_heads);
  detail::put_i32(out, w.spec.n_layers);
  detail::put_i32(out, w.spec.d_ff);
  detail::put_i32(out, w.spec.vocab);
  detail::put_i32(out, w.spec.max_t);
  detail::put_i32(out, w.spec.positional_mode == PositionalMode::rope ? 1 : 0);
  detail::put_f64(out, w.spec.rope_base);
  detail::put_matrix(out, w.embed);
  for (const auto& lw : w.layers) {
    detail::put_matrix(out, lw.w_q);
    detail::put_matrix(out, lw.w_k);
    detail::put_matrix(out, lw.w_v);
    detail::put_matrix(out, lw.w_o);
    detail::put_vector(out, lw.ln1_scale);
    detail::put_vector(out, lw.ln1_offset);
    detail::put_vector(out, lw.ln2_scale);
    detail::put_vector(out, lw.ln2_offset);
    detail::put_matrix(out, lw.w1);
    detail::put_matrix(out, lw.w2);
  }
  detail::put_matrix(out, w.unembed);
  return out;
}

template <class S>
ModelWeights<S> deserialize_weights(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kWeightMagic, 8) != 0)
    raise("corrupt-container", "bad magic in weight container");
  detail::ByteReader r(bytes.data() + 8, bytes.size() - 8);
  ModelWeights<S> w;
  w.spec.d_model = r.i32();
  w.spec.n_heads = r.i32();
  w.spec.n_layers = r.i32();
  w.spec.d_ff = r.i32();
  w.spec.vocab = r.i32();
  w.spec.max_t = r.i32();
  w.spec.positional_mode =
      r.i32() == 1 ? PositionalMode::rope : PositionalMode::none;
  w.spec.rope_base = r.f64();
  w.spec.validate();
  const Index d = w.spec.d_model;
  detail::get_matrix(r, w.embed, w.spec.vocab, d);
  w.layers.resize(w.spec.n_layers);
  for (auto& lw : w.layers) {
    detail::get_matrix(r, lw.w_q, d, d);
    detail::get_matrix(r, lw.w_k, d, d);
    detail::get_matrix(r, lw.w_v, d, d);
    detail::get_matrix(r, lw.w_o, d, d);
    detail::get_vector(r, lw.ln1_scale, d);
    detail::get_vector(r, lw.ln1_offset, d);
    detail::get_vector(r, lw.ln2_scale, d);
    detail::get_vector(r, lw.ln2_offset, d);
    detail::get_matrix(r, lw.w1, d, w.spec.d_ff);
    detail::get_matrix(r, lw.w2, w.spec.d_ff, d);
  }
  detail::get_matrix(r, w.unembed, d, w.spec.vocab);
  if (!r.exhausted())
    raise("corrupt-container", "trailing bytes in weight container");
  return w;
}

template <class S>
std::string model_hash(const ModelWeights<S>& w) {
  return sha256_hex(serialize_weights(w));
}

// Short id used in CSV `model` columns; full hash lives in the manifest.
template <class S>
std::string model_id(const ModelWeights<S>& w) {
  return model_hash(w).substr(0, 12);
}

template <class S>
void save_weights(const ModelWeights<S>& w, const std::string& path) {
  const std::vector<std::uint8_t> bytes = serialize_weights(w);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise("io-error", "cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) raise("io-error", "short write to " + path);
}

template <class S>
ModelWeights<S> load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise("io-error", "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return deserialize_weights<S>(bytes);
}

}  // namespace wilson
