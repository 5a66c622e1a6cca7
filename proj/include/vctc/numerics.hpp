#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace vctc {

// Natural-log probability; -inf encodes p = 0.
using LogProb = double;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Dense row-major array of doubles. Rank-1 arrays are treated as a single
// row, higher ranks fold every leading dimension into the row count.
struct Array {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Array() = default;
  explicit Array(std::vector<std::size_t> dims, double fill = 0.0);
  Array(std::vector<std::size_t> dims, std::vector<double> values);

  static Array scalar(double v) { return Array({1}, {v}); }
  static Array matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Array({rows, cols}, fill);
  }

  std::size_t size() const { return data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  friend bool operator==(const Array&, const Array&) = default;
};

std::size_t shape_size(std::span<const std::size_t> shape);

// ln(exp(a) + exp(b)) without overflow.
double log_add(double a, double b);

// ln sum_i exp(xs[i]) as m + ln sum_i exp(xs[i] - m), m = max(xs).
// Throws ContractError on empty input; returns -inf if every input is -inf.
double log_sum_exp(std::span<const double> xs);

// Counter-based generator: draw n is a pure function of (seed, stream, n),
// so any position in the sequence can be saved and replayed exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in (0, 1).
  double uniform_open();
  double normal();
  std::uint64_t below(std::uint64_t bound);

  // Independent generator keyed off this one's seed and the given id.
  Rng fork(std::uint64_t id) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

// i.i.d. N(0, 1) draws filling an array of the given shape.
Array sample_standard_normal(Rng& rng, std::vector<std::size_t> shape);

}  // namespace vctc
