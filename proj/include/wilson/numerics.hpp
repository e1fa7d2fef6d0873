#pragma once

// Dense linear-algebra primitives and deterministic randomness.
//
// Everything downstream funnels its matrix work and its random draws through
// this header. The RNG contract is strict: identical seeds produce identical
// draw sequences across runs and platforms (std::mt19937_64 is pinned by the
// standard; the distribution mappings below are our own fixed arithmetic, so
// no libstdc++/libc++ divergence can leak in).

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace wilson {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Matd = Mat<double>;
using Vecd = Vec<double>;
using Index = Eigen::Index;

// Typed failure: `kind` is a stable machine-checkable tag ("invalid-matrix",
// "schema-mismatch", ...), `what()` carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

[[noreturn]] inline void raise(const std::string& kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Seeded stream with platform-stable output. Child streams are derived from
// (parent seed, stream index) so parallel workers can draw independently and
// results stay identical for any worker count.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t u64() { return engine_(); }

  // [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

  // (0, 1]: safe to feed into log().
  double uniform_open() {
    return (static_cast<double>(u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the spare draw is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_open()));
    const double a = 2.0 * M_PI * uniform();
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Unbiased integer in [0, n) via rejection.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) raise("invalid-argument", "uniform_int: n must be positive");
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t x = u64();
      if (x >= threshold) return x % n;
    }
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_int(i)]);
    }
  }

  SeededRng child(std::uint64_t stream) const {
    return SeededRng(splitmix64(seed_ + 0x9E3779B97F4A7C15ull * (stream + 1)));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

enum class ProbeKind { rademacher, gaussian };

// +/-1 entries; E[v v^T] = I, so ||A v||^2 is an unbiased draw of ||A||_F^2.
inline Vecd rademacher_probe(SeededRng& rng, Index d) {
  if (d <= 0) raise("invalid-dimension", "probe dimension must be positive");
  Vecd v(d);
  for (Index i = 0; i < d; ++i) v[i] = (rng.u64() >> 63) ? 1.0 : -1.0;
  return v;
}

inline Vecd gaussian_probe(SeededRng& rng, Index d) {
  if (d <= 0) raise("invalid-dimension", "probe dimension must be positive");
  Vecd v(d);
  for (Index i = 0; i < d; ++i) v[i] = rng.normal();
  return v;
}

inline Vecd make_probe(SeededRng& rng, Index d, ProbeKind kind) {
  return kind == ProbeKind::rademacher ? rademacher_probe(rng, d)
                                       : gaussian_probe(rng, d);
}

template <class Derived>
double frobenius_norm(const Eigen::MatrixBase<Derived>& m) {
  if (m.size() == 0) raise("invalid-dimension", "frobenius_norm: empty matrix");
  return m.norm();
}

struct SpectralPair {
  Vecd eigenvalues;   // ascending
  Matd eigenvectors;  // columns match eigenvalue order
};

// Symmetric eigendecomposition. Callers pass covariance-like matrices; an
// asymmetry beyond 1e-10 means the caller built the matrix wrong, so fail
// loudly rather than silently symmetrizing.
inline SpectralPair eigh_spd(const Matd& m) {
  if (m.rows() != m.cols() || m.rows() == 0)
    raise("invalid-dimension", "eigh_spd: matrix must be square and non-empty");
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10)
    raise("invalid-matrix",
          "eigh_spd: asymmetry " + std::to_string(asym) + " exceeds 1e-10");
  Eigen::SelfAdjointEigenSolver<Matd> es(m);
  if (es.info() != Eigen::Success)
    raise("invalid-matrix", "eigh_spd: eigendecomposition failed to converge");
  return SpectralPair{es.eigenvalues(), es.eigenvectors()};
}

struct SvdTriple {
  Matd u;
  Vecd singular_values;  // descending
  Matd v;
};

inline SvdTriple svd(const Matd& m) {
  if (m.size() == 0) raise("invalid-dimension", "svd: empty matrix");
  Eigen::JacobiSVD<Matd> solver(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return SvdTriple{solver.matrixU(), solver.singularValues(), solver.matrixV()};
}

// Random orthogonal matrix (left factor of a Gaussian matrix's SVD).
inline Matd random_orthogonal(SeededRng& rng, Index d) {
  Matd g(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) g(i, j) = rng.normal();
  return svd(g).u;
}

// Linear-interpolation quantile over order statistics: h = (n-1)q, value
// interpolated between floor(h) and floor(h)+1.
inline double quantile_linear(std::vector<double> values, double q) {
  if (values.empty()) raise("insufficient-data", "quantile of empty sample");
  if (!(q >= 0.0 && q <= 1.0))
    raise("invalid-argument", "quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

// Probe estimate of ||A||_F^2 for a matrix available only through
// matrix-vector products: mean of ||A v_s||^2 over r probes.
template <class ApplyFn>
double hutchinson_frob2(ApplyFn&& apply, Index d, int r, SeededRng& rng,
                        ProbeKind kind = ProbeKind::rademacher) {
  if (r < 1) raise("invalid-argument", "hutchinson_frob2: need at least one probe");
  double acc = 0.0;
  for (int s = 0; s < r; ++s) {
    const Vecd v = make_probe(rng, d, kind);
    acc += Vecd(apply(v)).squaredNorm();
  }
  return acc / static_cast<double>(r);
}

}  // namespace wilson
