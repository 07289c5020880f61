#pragma once

// Complex vectors, seeded random streams and the Gaussian tail function.

#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace covert_rsma {

/// Raised when vector/matrix shapes disagree.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised when an argument lies outside the mathematical domain of an op.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Raised for invalid configuration (bad key, bad value, inconsistent sizes).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when an iterative numerical routine fails (non-convergence, NaN).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Complex = std::complex<double>;

class ComplexVector {
 public:
  ComplexVector() = default;
  explicit ComplexVector(std::size_t length) : entries_(length) {}
  ComplexVector(std::initializer_list<Complex> init) : entries_(init) {}
  explicit ComplexVector(std::vector<Complex> entries)
      : entries_(std::move(entries)) {}

  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
  [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }

  Complex& operator[](std::size_t i) { return entries_[i]; }
  const Complex& operator[](std::size_t i) const { return entries_[i]; }

  [[nodiscard]] std::span<const Complex> entries() const noexcept {
    return entries_;
  }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  [[nodiscard]] double squared_norm() const noexcept {
    double s = 0.0;
    for (const auto& z : entries_) s += std::norm(z);
    return s;
  }
  [[nodiscard]] double norm() const noexcept { return std::sqrt(squared_norm()); }

  ComplexVector& operator+=(const ComplexVector& other) {
    require_same_size(other, "operator+=");
    for (std::size_t i = 0; i < entries_.size(); ++i) entries_[i] += other[i];
    return *this;
  }
  ComplexVector& operator*=(double s) noexcept {
    for (auto& z : entries_) z *= s;
    return *this;
  }

  friend ComplexVector operator+(ComplexVector a, const ComplexVector& b) {
    a += b;
    return a;
  }
  friend ComplexVector operator*(double s, ComplexVector v) {
    v *= s;
    return v;
  }
  friend bool operator==(const ComplexVector&, const ComplexVector&) = default;

  void require_same_size(const ComplexVector& other, const char* what) const {
    if (other.size() != size()) {
      throw DimensionError(std::string(what) + ": length " +
                           std::to_string(size()) + " vs " +
                           std::to_string(other.size()));
    }
  }

 private:
  std::vector<Complex> entries_;
};

/// Hermitian inner product a^H b.
inline Complex inner_product(const ComplexVector& a, const ComplexVector& b) {
  a.require_same_size(b, "inner_product");
  Complex acc{0.0, 0.0};
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
  return acc;
}

namespace detail {
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Seeded pseudo-random stream. Streams derived from (seed, stream_id) are
/// independent for practical purposes, so parallel jobs never share state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : seed_(seed),
        engine_(detail::splitmix64(seed ^ detail::splitmix64(stream + 1))) {}

  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

  /// Child stream, deterministic in (parent seed, id) and the parent's draws
  /// so far are not consumed.
  [[nodiscard]] Rng derive(std::uint64_t id) const {
    return Rng(detail::splitmix64(seed_) ^ id, id);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (no cached second variate, so the state
  /// is exactly the engine state).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }

  friend std::ostream& operator<<(std::ostream& os, const Rng& rng) {
    return os << rng.seed_ << ' ' << rng.engine_;
  }
  friend std::istream& operator>>(std::istream& is, Rng& rng) {
    return is >> rng.seed_ >> rng.engine_;
  }
  friend bool operator==(const Rng& a, const Rng& b) {
    return a.seed_ == b.seed_ && a.engine_ == b.engine_;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// Circularly-symmetric complex Gaussian vector; each real and imaginary part
/// has variance `variance / 2`.
inline ComplexVector sample_complex_gaussian(Rng& rng, double variance,
                                             std::size_t length) {
  if (!(variance >= 0.0) || !std::isfinite(variance)) {
    throw DomainError("sample_complex_gaussian: variance must be >= 0");
  }
  ComplexVector v(length);
  const double sd = std::sqrt(variance / 2.0);
  for (std::size_t i = 0; i < length; ++i) {
    const double re = rng.normal();
    const double im = rng.normal();
    v[i] = Complex{sd * re, sd * im};
  }
  return v;
}

/// Standard Gaussian tail probability Q(x) = P(Z > x).
inline double q_function(double x) {
  if (!std::isfinite(x)) throw DomainError("q_function: non-finite input");
  return 0.5 * std::erfc(x / std::numbers::sqrt2);
}

/// Inverse of q_function. Bisection on a bracket followed by Newton polishing;
/// the residual Q(x) - p is driven below 1e-12 relative to p.
inline double q_inverse(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("q_inverse: probability must lie in (0, 1)");
  }
  if (p == 0.5) return 0.0;
  // Q is decreasing; Q(-40) == 1 and Q(40) underflows, which brackets every
  // representable p in (0, 1).
  double lo = -40.0;
  double hi = 40.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++i) {
    const double mid = 0.5 * (lo + hi);
    if (q_function(mid) > p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  double x = 0.5 * (lo + hi);
  // dQ/dx = -phi(x)
  for (int i = 0; i < 3; ++i) {
    const double phi =
        std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    if (phi <= 0.0) break;
    const double step = (q_function(x) - p) / -phi;
    if (!std::isfinite(step)) break;
    x -= step;
  }
  return x;
}

/// dB to linear power ratio.
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

}  // namespace covert_rsma
