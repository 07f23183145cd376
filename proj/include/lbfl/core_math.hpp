#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <initializer_list>
#include <numbers>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "lbfl/errors.hpp"

namespace lbfl {

/// Flat parameter (or update) vector of a model. The dimension is fixed
/// at construction; every binary operation checks it.
class ParamVector {
public:
  ParamVector() = default;
  explicit ParamVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  ParamVector(std::initializer_list<double> init) : values_(init) {}
  explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  const std::vector<double>& values() const noexcept { return values_; }

  bool is_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  // Bitwise equality would distinguish +0/-0 and NaN payloads; this is
  // plain element-wise ==, so NaN never compares equal.
  friend bool operator==(const ParamVector& a, const ParamVector& b) noexcept {
    return a.values_ == b.values_;
  }

private:
  std::vector<double> values_;
};

inline void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
  }
}

/// Counter-based generator (Philox4x32-10). The master seed is the key;
/// the stream id occupies the upper half of the 128-bit counter, so two
/// streams with different ids never produce overlapping blocks.
class RngStream {
public:
  RngStream() = default;
  RngStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_id_(stream_id) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  std::uint64_t next_u64() {
    if (buffered_ == 0) refill();
    return buffer_[--buffered_];
  }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw ConfigError("RngStream::below: bound must be positive");
    const std::uint64_t limit = std::uint64_t(-1) - (std::uint64_t(-1) % bound);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % bound;
  }

  // Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (has_cached_normal_) {
      has_cached_normal_ = false;
      return cached_normal_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_normal_ = true;
    return r * std::cos(theta);
  }

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = std::uint64_t(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
  }

  void refill() {
    std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(counter_),
                                     static_cast<std::uint32_t>(counter_ >> 32),
                                     static_cast<std::uint32_t>(stream_id_),
                                     static_cast<std::uint32_t>(stream_id_ >> 32)};
    std::uint32_t k0 = static_cast<std::uint32_t>(seed_);
    std::uint32_t k1 = static_cast<std::uint32_t>(seed_ >> 32);
    for (int round = 0; round < 10; ++round) {
      std::uint32_t hi0, lo0, hi1, lo1;
      mulhilo(kMul0, ctr[0], hi0, lo0);
      mulhilo(kMul1, ctr[2], hi1, lo1);
      ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
      k0 += kWeyl0;
      k1 += kWeyl1;
    }
    ++counter_;
    // Popped from the back, so store in reverse to emit block order.
    buffer_[1] = (std::uint64_t(ctr[1]) << 32) | ctr[0];
    buffer_[0] = (std::uint64_t(ctr[3]) << 32) | ctr[2];
    buffered_ = 2;
  }

  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

/// alpha * x + y
inline ParamVector axpy(double alpha, const ParamVector& x, const ParamVector& y) {
  require_same_dim(x.size(), y.size(), "axpy");
  ParamVector out(y);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += alpha * x[j];
  return out;
}

inline double sq_euclidean(const ParamVector& x, const ParamVector& y) {
  require_same_dim(x.size(), y.size(), "sq_euclidean");
  double acc = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    // (x-y)^2 == (y-x)^2 bit for bit, so the result is symmetric.
    const double diff = x[j] - y[j];
    acc += diff * diff;
  }
  return acc;
}

// Strict weak order on doubles with every NaN placed after +inf.
inline bool less_nan_last(double a, double b) noexcept {
  if (std::isnan(a)) return false;
  if (std::isnan(b)) return true;
  return a < b;
}

/// Values of coordinate j across all vectors, sorted ascending (stable).
inline std::vector<double> coordwise_sorted(std::span<const ParamVector> vectors, std::size_t j) {
  if (vectors.empty()) throw DimensionError("coordwise_sorted: empty vector list");
  const std::size_t dim = vectors.front().size();
  if (j >= dim) throw DimensionError("coordwise_sorted: coordinate index out of range");
  std::vector<double> column;
  column.reserve(vectors.size());
  for (const auto& v : vectors) {
    require_same_dim(v.size(), dim, "coordwise_sorted");
    column.push_back(v[j]);
  }
  std::stable_sort(column.begin(), column.end(), less_nan_last);
  return column;
}

inline ParamVector gaussian_sample(RngStream& rng, double mu, double sigma, std::size_t dim) {
  if (!(sigma >= 0.0)) throw ConfigError("gaussian_sample: sigma must be >= 0");
  ParamVector out(dim);
  for (std::size_t j = 0; j < dim; ++j) out[j] = mu + sigma * rng.normal();
  return out;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is
/// visited exactly once; the caller writes results into per-index slots.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto body = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t count = std::min(workers, n);
    pool.reserve(count);
    for (std::size_t w = 0; w < count; ++w) pool.emplace_back(body);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace lbfl
