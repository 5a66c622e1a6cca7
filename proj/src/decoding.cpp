#include "vctc/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "vctc/error.hpp"

namespace vctc {

DecodeResult best_path_decode(const FrameLogProbs& probs) {
  DecodeResult out;
  out.score = 0.0;
  const int blank = probs.blank();
  int prev = -1;
  for (std::size_t t = 0; t < probs.frames(); ++t) {
    const auto row = probs.frame(t);
    // max_element returns the first maximum, i.e. the lowest index on ties.
    const int k = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    out.score += row[static_cast<std::size_t>(k)];
    if (k != prev && k != blank) {
      out.tokens.push_back(k);
      out.emission_frames.push_back(t);
    }
    prev = k;
  }
  return out;
}

namespace {

struct Hyp {
  double blank_mass = kNegInf;
  double symbol_mass = kNegInf;
  double lm_score = 0.0;  // natural-log LM probability of the prefix, unweighted
  std::vector<std::size_t> frames;

  double acoustic() const { return log_add(blank_mass, symbol_mass); }
};

class LmScorer {
 public:
  LmScorer(const LmFusion& fusion, std::size_t order_cap) : fusion_(fusion) {
    if (fusion.lm) {
      detail::require(fusion.vocab != nullptr, "beam_search_decode: LM fusion needs a vocabulary");
      context_len_ = std::min(order_cap, fusion.lm->order());
      context_len_ = context_len_ > 0 ? context_len_ - 1 : 0;
    }
  }

  bool active() const { return fusion_.lm != nullptr; }

  double score(const LabelSequence& prefix, const std::string& word) const {
    NGramLm::Context ctx;
    const std::size_t have = prefix.size() + 1;  // including <s>
    const std::size_t take = std::min(have, context_len_);
    for (std::size_t i = have - take; i < have; ++i) {
      ctx.push_back(i == 0 ? std::string(NGramLm::kBos) : fusion_.vocab->symbol(prefix[i - 1]));
    }
    return fusion_.lm->log_prob(ctx, word);
  }

  double extend(const LabelSequence& prefix, int token) const { return score(prefix, fusion_.vocab->symbol(token)); }
  double finish(const LabelSequence& prefix) const { return score(prefix, NGramLm::kEos); }

 private:
  LmFusion fusion_;
  std::size_t context_len_ = 0;
};

// One prefix beam search at a fixed width. `pruned_any` reports whether any
// step had more live prefixes than the width allowed.
DecodeResult beam_pass(const FrameLogProbs& probs, const BeamConfig& cfg, const LmScorer& lm, std::size_t width,
                       bool& pruned_any) {
  const int blank = probs.blank();
  const int n_symbols = blank;

  auto rank_score = [&](const LabelSequence& prefix, const Hyp& h) {
    double s = h.acoustic() + cfg.insertion_bonus * static_cast<double>(prefix.size());
    if (lm.active() && cfg.lm_weight != 0.0) s += cfg.lm_weight * h.lm_score;
    return s;
  };

  std::map<LabelSequence, Hyp> beam;
  beam[{}].blank_mass = 0.0;

  for (std::size_t t = 0; t < probs.frames(); ++t) {
    std::map<LabelSequence, Hyp> next;
    auto slot = [&](const LabelSequence& prefix, const Hyp& origin) -> Hyp& {
      auto [it, inserted] = next.try_emplace(prefix);
      if (inserted) {
        it->second.lm_score = origin.lm_score;
        it->second.frames = origin.frames;
      } else if (origin.frames < it->second.frames) {
        it->second.frames = origin.frames;
      }
      return it->second;
    };
    for (const auto& [prefix, h] : beam) {
      const double total = h.acoustic();
      Hyp& same = slot(prefix, h);
      same.blank_mass = log_add(same.blank_mass, total + probs(t, blank));
      if (!prefix.empty()) {
        same.symbol_mass = log_add(same.symbol_mass, h.symbol_mass + probs(t, prefix.back()));
      }
      for (int c = 0; c < n_symbols; ++c) {
        const double lp = probs(t, c);
        if (lp == kNegInf) continue;
        const bool repeat = !prefix.empty() && prefix.back() == c;
        const double from = repeat ? h.blank_mass : total;
        if (from == kNegInf) continue;
        LabelSequence extended = prefix;
        extended.push_back(c);
        auto [it, inserted] = next.try_emplace(extended);
        Hyp& e = it->second;
        std::vector<std::size_t> frames = h.frames;
        frames.push_back(t);
        if (inserted) {
          e.lm_score = h.lm_score + (lm.active() ? lm.extend(prefix, c) : 0.0);
          e.frames = std::move(frames);
        } else if (frames < e.frames) {
          e.frames = std::move(frames);
        }
        e.symbol_mass = log_add(e.symbol_mass, from + lp);
      }
    }
    std::vector<std::pair<double, const LabelSequence*>> ranked;
    ranked.reserve(next.size());
    for (const auto& [prefix, h] : next) {
      if (h.acoustic() == kNegInf) continue;
      ranked.emplace_back(rank_score(prefix, h), &prefix);
    }
    if (ranked.size() > width) pruned_any = true;
    const std::size_t keep = std::min(width, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(),
                      [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return *a.second < *b.second;
                      });
    std::map<LabelSequence, Hyp> pruned;
    for (std::size_t i = 0; i < keep; ++i) pruned.emplace(*ranked[i].second, std::move(next.at(*ranked[i].second)));
    beam = std::move(pruned);
  }

  DecodeResult best;
  const LabelSequence* best_prefix = nullptr;
  for (const auto& [prefix, h] : beam) {
    double s = rank_score(prefix, h);
    if (lm.active() && cfg.lm_weight != 0.0) s += cfg.lm_weight * lm.finish(prefix);
    if (best_prefix == nullptr || s > best.score) {
      best.score = s;
      best_prefix = &prefix;
    }
  }
  if (best_prefix) {
    best.tokens = *best_prefix;
    best.emission_frames = beam.at(*best_prefix).frames;
  }
  return best;
}

}  // namespace

DecodeResult beam_search_decode(const FrameLogProbs& probs, const BeamConfig& cfg, const LmFusion& fusion) {
  detail::require(cfg.beam_width >= 1, "beam_search_decode: beam_width must be >= 1");
  const LmScorer lm(fusion, cfg.lm_order);
  // Pruned prefix masses are lower bounds, so a wider pass alone can return
  // a worse prefix than a narrower one. Keeping the best over widths
  // 1..beam_width makes the score nondecreasing in the width; once a pass
  // prunes nothing, wider passes would repeat it.
  DecodeResult best;
  for (std::size_t w = 1; w <= cfg.beam_width; ++w) {
    bool pruned_any = false;
    DecodeResult r = beam_pass(probs, cfg, lm, w, pruned_any);
    if (w == 1 || r.score > best.score) best = std::move(r);
    if (!pruned_any) break;
  }
  return best;
}

EditCounts edit_distance(const LabelSequence& hyp, const LabelSequence& ref) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }

  EditCounts out;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool match = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (match ? 0 : 1)) {
        if (!match) ++out.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++out.deletions;
      --i;
    } else {
      ++out.insertions;
      --j;
    }
  }
  return out;
}

double error_rate(const EditCounts& e, std::size_t ref_len) {
  return static_cast<double>(e.total()) / static_cast<double>(std::max<std::size_t>(ref_len, 1));
}

}  // namespace vctc
