// Core utilities shared by every fairmap module: error taxonomy, a minimal
// row-major matrix, and a deterministic RNG front-end.
//
// The RNG deliberately avoids std::uniform_real_distribution and
// std::normal_distribution: their output sequences are implementation-defined,
// and bit-level reproducibility across toolchains is a contract here, not a
// nicety.  mt19937_64 itself is pinned by the standard.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fairmap {

enum class errc {
  empty_input,
  argument,
  parse,
  schema,
  dimension_mismatch,
  training_divergence,
  undefined_metric,
  degenerate_distribution,
  io,
  group_mismatch,
  stage_failure,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::empty_input: return "empty_input";
    case errc::argument: return "argument";
    case errc::parse: return "parse";
    case errc::schema: return "schema";
    case errc::dimension_mismatch: return "dimension_mismatch";
    case errc::training_divergence: return "training_divergence";
    case errc::undefined_metric: return "undefined_metric";
    case errc::degenerate_distribution: return "degenerate_distribution";
    case errc::io: return "io";
    case errc::group_mismatch: return "group_mismatch";
    case errc::stage_failure: return "stage_failure";
  }
  return "unknown";
}

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) {
  throw error(code, what);
}

inline void require(bool cond, errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

// ---------------------------------------------------------------------------
// Matrix: dense row-major, just enough surface for this artifact.

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t i = 0;
    for (const auto& r : rows) {
      require(r.size() == m.cols_, errc::dimension_mismatch, "ragged initializer");
      std::size_t j = 0;
      for (double v : r) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  std::vector<double> row_copy(std::size_t i) const {
    return std::vector<double>(row(i), row(i) + cols_);
  }

  void set_row(std::size_t i, const std::vector<double>& v) {
    require(v.size() == cols_, errc::dimension_mismatch, "set_row width");
    std::copy(v.begin(), v.end(), row(i));
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Rng: deterministic uniform/normal stream with named substream derivation.

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Stable seed for a named stage under one master seed.  Two splitmix rounds so
// that (master, tag) pairs with small integer structure still decorrelate.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag) {
  return splitmix64(splitmix64(master) ^ splitmix64(tag ^ 0xA0761D6478BD642Full));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0,1) with 53 random mantissa bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller with a cached spare; consumes uniforms in a fixed order.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // Guard the log: uniform() can return exactly 0.
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Uniform integer in [0, n).  Modulo bias at n ~ 2^64 scale is irrelevant
  // for the shuffle/subsample sizes here; determinism is what matters.
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Fresh generator for a named substream of this one's seed.  Substreams
  // depend only on (seed, tag), never on how much of this stream was consumed.
  Rng derive(std::uint64_t tag) const { return Rng(derive_seed(seed_, tag)); }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace fairmap
