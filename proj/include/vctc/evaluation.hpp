#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "vctc/decoding.hpp"
#include "vctc/models.hpp"
#include "vctc/synthetic.hpp"

namespace vctc {

enum class DecodeMethod { BestPath, Beam };

struct DecodeOptions {
  DecodeMethod method = DecodeMethod::BestPath;
  BeamConfig beam;
  const NGramLm* lm = nullptr;
  // Width of the target-length buckets in the report (1-w, w+1-2w, ...).
  std::size_t bucket_width = 4;
};

struct LengthBucket {
  std::size_t min_len = 0;
  std::size_t max_len = 0;
  std::size_t utterances = 0;
  std::size_t ref_tokens = 0;
  EditCounts edits;
  double error_rate() const { return vctc::error_rate(edits, ref_tokens); }
};

struct EvalReport {
  std::size_t utterances = 0;
  std::size_t ref_tokens = 0;
  EditCounts edits;
  std::vector<LengthBucket> buckets;

  double error_rate() const { return vctc::error_rate(edits, ref_tokens); }
  std::string to_json() const;
};

DecodeResult decode(const FrameLogProbs& probs, const DecodeOptions& opts, const Vocab& vocab);

// Scores decoded hypotheses against references.
EvalReport score_hypotheses(const std::vector<LabelSequence>& hyps, const std::vector<LabelSequence>& refs,
                            std::size_t bucket_width = 4);

// Decodes posteriors directly (no model), e.g. oracle one-hot tables.
EvalReport evaluate_posteriors(const std::vector<FrameLogProbs>& posteriors, const std::vector<LabelSequence>& refs,
                               const DecodeOptions& opts, const Vocab& vocab);

// Frame posteriors of a model in mean-latent mode.
FrameLogProbs model_posteriors(const ModelConfig& cfg, const ParamStore& params, const Array& features);

// Decodes every utterance with latents fixed at their posterior mean.
// Throws ContractError on an empty dataset and ConfigError when the
// dataset's vocabulary or feature width differs from the model's.
EvalReport evaluate(const ModelConfig& cfg, const ParamStore& params, const Dataset& data, const DecodeOptions& opts);

}  // namespace vctc
