#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vctc/autodiff.hpp"
#include "vctc/numerics.hpp"

namespace vctc {

// Output symbols plus the blank. Symbols take indices 0..n-1 and the blank
// always takes index n, so growing the vocabulary never renumbers symbols.
class Vocab {
 public:
  Vocab() = default;
  explicit Vocab(std::vector<std::string> symbols);
  // Symbols named "t0", "t1", ...
  static Vocab numbered(std::size_t n);

  std::size_t symbol_count() const { return symbols_.size(); }
  // Symbols plus blank.
  std::size_t class_count() const { return symbols_.size() + 1; }
  int blank() const { return static_cast<int>(symbols_.size()); }
  bool is_symbol(int k) const { return k >= 0 && k < blank(); }
  const std::string& symbol(int k) const;
  int index_of(const std::string& s) const;  // -1 if absent
  const std::vector<std::string>& symbols() const { return symbols_; }

  friend bool operator==(const Vocab&, const Vocab&) = default;

 private:
  std::vector<std::string> symbols_;
};

// Token indices, blank excluded.
using LabelSequence = std::vector<int>;
// One class index (symbol or blank) per input frame.
using Path = std::vector<int>;

// T_in x |V u {blank}| table of per-frame log-probabilities.
class FrameLogProbs {
 public:
  FrameLogProbs() = default;
  FrameLogProbs(std::size_t frames, std::size_t classes, double fill = 0.0);
  explicit FrameLogProbs(const Array& table);
  // Row-wise log-softmax of raw scores.
  static FrameLogProbs from_logits(const Array& logits);

  std::size_t frames() const { return frames_; }
  std::size_t classes() const { return classes_; }
  int blank() const { return static_cast<int>(classes_) - 1; }
  double operator()(std::size_t t, std::size_t k) const { return data_[t * classes_ + k]; }
  double& operator()(std::size_t t, std::size_t k) { return data_[t * classes_ + k]; }
  std::span<const double> frame(std::size_t t) const { return {&data_[t * classes_], classes_}; }
  Array to_array() const;

  // max_t |log_sum_exp(row t)|.
  double max_normalization_error() const;

 private:
  std::size_t frames_ = 0;
  std::size_t classes_ = 0;
  std::vector<double> data_;
};

// Merge runs of identical labels, then drop blanks.
LabelSequence collapse(const Path& path, int blank);

// Minimum number of frames any path collapsing to y needs.
std::size_t min_frames_required(const LabelSequence& y);

// Log-domain forward/backward tables over the blank-interleaved target.
// alpha(t, s) and beta(t, s) both include the emission at (t, s).
struct CtcLattice {
  std::vector<int> extended;  // blank, y1, blank, y2, ..., blank
  std::size_t frames = 0;
  std::vector<double> alpha;  // frames x extended.size()
  std::vector<double> beta;
  double log_likelihood = kNegInf;

  std::size_t states() const { return extended.size(); }
  double a(std::size_t t, std::size_t s) const { return alpha[t * states() + s]; }
  double b(std::size_t t, std::size_t s) const { return beta[t * states() + s]; }
};

CtcLattice build_lattice(const FrameLogProbs& probs, const LabelSequence& y);

// log sum over paths in F^-1(y) of prod_t p(a_t). Returns -inf when y does
// not fit in the available frames.
LogProb ctc_log_likelihood(const FrameLogProbs& probs, const LabelSequence& y);

// Per-frame class posteriors gamma(t, k) = P(a_t = k | y, probs), as
// probabilities. Throws InfeasibleError when the likelihood is -inf.
Array ctc_occupancy(const FrameLogProbs& probs, const LabelSequence& y);

// d log p(y) / d logits with the softmax folded in: gamma - softmax.
// Throws InfeasibleError when the likelihood is -inf.
Array ctc_grad(const FrameLogProbs& probs, const LabelSequence& y);

// Literal enumeration of every path. Refuses instances with more than 1e7 paths.
LogProb brute_force_log_likelihood(const FrameLogProbs& probs, const LabelSequence& y);

// Differentiable log p(y | .) for a (T x classes) tensor of normalized log
// probabilities; blank is the last column. Backward raises InfeasibleError
// when the value is -inf.
ad::Tensor ctc_log_likelihood(const ad::Tensor& log_probs, const LabelSequence& y);

}  // namespace vctc
