#pragma once

#include <cstddef>
#include <vector>

#include "vctc/ctc.hpp"
#include "vctc/ngram_lm.hpp"

namespace vctc {

struct DecodeResult {
  LabelSequence tokens;
  LogProb score = kNegInf;
  // Frame at which each token was first emitted; nondecreasing.
  std::vector<std::size_t> emission_frames;
};

// Per-frame argmax (ties go to the lowest class index), then collapse.
// score is the summed log-probability of that single path.
DecodeResult best_path_decode(const FrameLogProbs& probs);

struct BeamConfig {
  std::size_t beam_width = 30;
  // Context used from the LM is min(lm_order, lm.order()) - 1 tokens.
  std::size_t lm_order = 4;
  double lm_weight = 0.5;
  double insertion_bonus = 0.0;
};

// Language model fused into the beam, with the vocabulary that maps class
// indices to LM words.
struct LmFusion {
  const NGramLm* lm = nullptr;
  const Vocab* vocab = nullptr;
};

// CTC prefix beam search. Each prefix tracks log-mass ending in blank and
// in a symbol; ranking adds lm_weight * LM log-prob + insertion_bonus per
// token, and at the end lm_weight * log P(</s> | prefix). The returned score
// is that combined value (just log p(prefix | X) without an LM), taken as
// the best over widths 1..beam_width so it never drops as the beam widens.
DecodeResult beam_search_decode(const FrameLogProbs& probs, const BeamConfig& cfg, const LmFusion& fusion = {});

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;

  std::size_t total() const { return substitutions + insertions + deletions; }
  EditCounts& operator+=(const EditCounts& o) {
    substitutions += o.substitutions;
    insertions += o.insertions;
    deletions += o.deletions;
    return *this;
  }
  friend bool operator==(const EditCounts&, const EditCounts&) = default;
};

// Minimum-cost unit-weight alignment of hyp against ref. Among equal-cost
// alignments, substitutions are preferred over insertion+deletion pairs.
EditCounts edit_distance(const LabelSequence& hyp, const LabelSequence& ref);

// (S + I + D) / max(|ref|, 1).
double error_rate(const EditCounts& e, std::size_t ref_len);

}  // namespace vctc
