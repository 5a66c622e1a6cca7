#include "vctc/evaluation.hpp"

#include <algorithm>

#include "json.hpp"
#include "vctc/error.hpp"

namespace vctc {

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["utterances"] = utterances;
  j["ref_tokens"] = ref_tokens;
  j["substitutions"] = edits.substitutions;
  j["insertions"] = edits.insertions;
  j["deletions"] = edits.deletions;
  j["error_rate"] = error_rate();
  j["buckets"] = nlohmann::json::array();
  for (const auto& b : buckets) {
    j["buckets"].push_back({{"min_len", b.min_len},
                            {"max_len", b.max_len},
                            {"utterances", b.utterances},
                            {"ref_tokens", b.ref_tokens},
                            {"substitutions", b.edits.substitutions},
                            {"insertions", b.edits.insertions},
                            {"deletions", b.edits.deletions},
                            {"error_rate", b.error_rate()}});
  }
  return j.dump(2);
}

DecodeResult decode(const FrameLogProbs& probs, const DecodeOptions& opts, const Vocab& vocab) {
  if (opts.method == DecodeMethod::BestPath) return best_path_decode(probs);
  return beam_search_decode(probs, opts.beam, LmFusion{opts.lm, opts.lm ? &vocab : nullptr});
}

EvalReport score_hypotheses(const std::vector<LabelSequence>& hyps, const std::vector<LabelSequence>& refs,
                            std::size_t bucket_width) {
  detail::require(hyps.size() == refs.size(), "score_hypotheses: hypothesis/reference count mismatch");
  detail::require(!refs.empty(), "score_hypotheses: empty dataset");
  detail::require(bucket_width >= 1, "score_hypotheses: bucket width must be >= 1");
  EvalReport r;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const EditCounts e = edit_distance(hyps[i], refs[i]);
    r.utterances += 1;
    r.ref_tokens += refs[i].size();
    r.edits += e;
    const std::size_t len = refs[i].size();
    const std::size_t b = len == 0 ? 0 : (len - 1) / bucket_width;
    if (r.buckets.size() <= b) {
      for (std::size_t k = r.buckets.size(); k <= b; ++k) {
        r.buckets.push_back(LengthBucket{k * bucket_width + 1, (k + 1) * bucket_width, 0, 0, {}});
      }
    }
    r.buckets[b].utterances += 1;
    r.buckets[b].ref_tokens += len;
    r.buckets[b].edits += e;
  }
  std::erase_if(r.buckets, [](const LengthBucket& b) { return b.utterances == 0; });
  return r;
}

EvalReport evaluate_posteriors(const std::vector<FrameLogProbs>& posteriors, const std::vector<LabelSequence>& refs,
                               const DecodeOptions& opts, const Vocab& vocab) {
  std::vector<LabelSequence> hyps;
  hyps.reserve(posteriors.size());
  for (const auto& p : posteriors) hyps.push_back(decode(p, opts, vocab).tokens);
  return score_hypotheses(hyps, refs, opts.bucket_width);
}

FrameLogProbs model_posteriors(const ModelConfig& cfg, const ParamStore& params, const Array& features) {
  Rng unused(0);
  return forward(cfg, params, features, unused, LatentMode::Mean).frame_log_probs();
}

EvalReport evaluate(const ModelConfig& cfg, const ParamStore& params, const Dataset& data, const DecodeOptions& opts) {
  if (data.empty()) throw ContractError("evaluate: empty dataset");
  if (!(data.vocab == cfg.vocab)) throw ConfigError("evaluate: dataset vocabulary differs from the model's");
  if (data.d_in != cfg.d_in) throw ConfigError("evaluate: dataset feature width differs from the model's");
  std::vector<LabelSequence> hyps, refs;
  hyps.reserve(data.size());
  refs.reserve(data.size());
  for (const Utterance& u : data.items) {
    hyps.push_back(decode(model_posteriors(cfg, params, u.features), opts, cfg.vocab).tokens);
    refs.push_back(u.labels);
  }
  return score_hypotheses(hyps, refs, opts.bucket_width);
}

}  // namespace vctc
