#include "vctc/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vctc/error.hpp"

namespace vctc {

std::size_t shape_size(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Array::Array(std::vector<std::size_t> dims, double fill)
    : shape(std::move(dims)), data(shape_size(shape), fill) {}

Array::Array(std::vector<std::size_t> dims, std::vector<double> values)
    : shape(std::move(dims)), data(std::move(values)) {
  detail::require(shape_size(shape) == data.size(), "Array: value count does not match shape");
}

std::size_t Array::rows() const {
  if (shape.size() <= 1) return 1;
  return data.size() / shape.back();
}

std::size_t Array::cols() const { return shape.empty() ? 1 : shape.back(); }

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

double log_sum_exp(std::span<const double> xs) {
  detail::require(!xs.empty(), "log_sum_exp: empty input");
  const double m = *std::max_element(xs.begin(), xs.end());
  if (m == kNegInf) return kNegInf;
  if (std::isinf(m)) return m;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

namespace {

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() {
  const std::uint64_t key = mix64(seed_ ^ mix64(stream_ + 0x9e3779b97f4a7c15ULL));
  return mix64(key + (counter_++) * 0x9e3779b97f4a7c15ULL);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform_open() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
  // Box-Muller, cosine branch only so the counter advances by exactly two.
  const double u1 = uniform_open();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t bound) {
  detail::require(bound > 0, "Rng::below: bound must be positive");
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % bound;
}

Rng Rng::fork(std::uint64_t id) const {
  return Rng(mix64(seed_ + 0x632be59bd9b4e019ULL * (stream_ + 1)), id);
}

Array sample_standard_normal(Rng& rng, std::vector<std::size_t> shape) {
  detail::require(!shape.empty(), "sample_standard_normal: empty shape");
  for (std::size_t d : shape) detail::require(d > 0, "sample_standard_normal: zero extent");
  Array out(std::move(shape));
  for (double& v : out.data) v = rng.normal();
  return out;
}

}  // namespace vctc
