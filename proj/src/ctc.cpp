#include "vctc/ctc.hpp"

#include <algorithm>
#include <cmath>

#include "vctc/error.hpp"

namespace vctc {

Vocab::Vocab(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    detail::require(!symbols_[i].empty(), "Vocab: empty symbol");
    for (std::size_t j = 0; j < i; ++j) detail::require(symbols_[i] != symbols_[j], "Vocab: duplicate symbol");
  }
}

Vocab Vocab::numbered(std::size_t n) {
  std::vector<std::string> s;
  s.reserve(n);
  for (std::size_t i = 0; i < n; ++i) s.push_back("t" + std::to_string(i));
  return Vocab(std::move(s));
}

const std::string& Vocab::symbol(int k) const {
  detail::require(is_symbol(k), "Vocab::symbol: index out of range");
  return symbols_[static_cast<std::size_t>(k)];
}

int Vocab::index_of(const std::string& s) const {
  auto it = std::find(symbols_.begin(), symbols_.end(), s);
  return it == symbols_.end() ? -1 : static_cast<int>(it - symbols_.begin());
}

FrameLogProbs::FrameLogProbs(std::size_t frames, std::size_t classes, double fill)
    : frames_(frames), classes_(classes), data_(frames * classes, fill) {
  detail::require(classes >= 1, "FrameLogProbs: need at least the blank class");
}

FrameLogProbs::FrameLogProbs(const Array& table)
    : frames_(table.rows()), classes_(table.cols()), data_(table.data) {
  detail::require(classes_ >= 1, "FrameLogProbs: need at least the blank class");
}

FrameLogProbs FrameLogProbs::from_logits(const Array& logits) {
  FrameLogProbs out(logits);
  for (std::size_t t = 0; t < out.frames_; ++t) {
    const double lse = log_sum_exp(out.frame(t));
    for (std::size_t k = 0; k < out.classes_; ++k) out(t, k) -= lse;
  }
  return out;
}

Array FrameLogProbs::to_array() const { return Array({frames_, classes_}, data_); }

double FrameLogProbs::max_normalization_error() const {
  double worst = 0.0;
  for (std::size_t t = 0; t < frames_; ++t) worst = std::max(worst, std::abs(log_sum_exp(frame(t))));
  return worst;
}

LabelSequence collapse(const Path& path, int blank) {
  LabelSequence out;
  int prev = -1;
  for (int a : path) {
    if (a != prev && a != blank) out.push_back(a);
    prev = a;
  }
  return out;
}

std::size_t min_frames_required(const LabelSequence& y) {
  std::size_t n = y.size();
  for (std::size_t i = 1; i < y.size(); ++i) n += (y[i] == y[i - 1]) ? 1 : 0;
  return n;
}

namespace {

void check_labels(const FrameLogProbs& probs, const LabelSequence& y) {
  for (int k : y) detail::require(k >= 0 && k < probs.blank(), "ctc: label is blank or out of range");
}

}  // namespace

CtcLattice build_lattice(const FrameLogProbs& probs, const LabelSequence& y) {
  check_labels(probs, y);
  const int blank = probs.blank();
  CtcLattice lat;
  lat.frames = probs.frames();
  lat.extended.reserve(2 * y.size() + 1);
  lat.extended.push_back(blank);
  for (int k : y) {
    lat.extended.push_back(k);
    lat.extended.push_back(blank);
  }
  const std::size_t S = lat.states();
  const std::size_t T = lat.frames;
  lat.alpha.assign(T * S, kNegInf);
  lat.beta.assign(T * S, kNegInf);
  if (T == 0) {
    if (y.empty()) lat.log_likelihood = 0.0;
    return lat;
  }
  if (min_frames_required(y) > T) return lat;

  auto skip_allowed = [&](std::size_t s) {
    return s >= 2 && lat.extended[s] != blank && lat.extended[s] != lat.extended[s - 2];
  };
  const auto& ext = lat.extended;

  lat.alpha[0] = probs(0, ext[0]);
  if (S > 1) lat.alpha[1] = probs(0, ext[1]);
  for (std::size_t t = 1; t < T; ++t) {
    const double* prev = &lat.alpha[(t - 1) * S];
    double* cur = &lat.alpha[t * S];
    for (std::size_t s = 0; s < S; ++s) {
      double acc = prev[s];
      if (s >= 1) acc = log_add(acc, prev[s - 1]);
      if (skip_allowed(s)) acc = log_add(acc, prev[s - 2]);
      cur[s] = acc == kNegInf ? kNegInf : acc + probs(t, ext[s]);
    }
  }

  lat.beta[(T - 1) * S + S - 1] = probs(T - 1, ext[S - 1]);
  if (S > 1) lat.beta[(T - 1) * S + S - 2] = probs(T - 1, ext[S - 2]);
  for (std::size_t t = T - 1; t-- > 0;) {
    const double* next = &lat.beta[(t + 1) * S];
    double* cur = &lat.beta[t * S];
    for (std::size_t s = 0; s < S; ++s) {
      double acc = next[s];
      if (s + 1 < S) acc = log_add(acc, next[s + 1]);
      if (s + 2 < S && skip_allowed(s + 2)) acc = log_add(acc, next[s + 2]);
      cur[s] = acc == kNegInf ? kNegInf : acc + probs(t, ext[s]);
    }
  }

  const double* last = &lat.alpha[(T - 1) * S];
  lat.log_likelihood = S > 1 ? log_add(last[S - 1], last[S - 2]) : last[0];
  return lat;
}

LogProb ctc_log_likelihood(const FrameLogProbs& probs, const LabelSequence& y) {
  return build_lattice(probs, y).log_likelihood;
}

namespace {

Array occupancy_from_lattice(const CtcLattice& lat, const FrameLogProbs& probs) {
  if (lat.log_likelihood == kNegInf) {
    throw InfeasibleError("ctc: target cannot be aligned to the input (log-likelihood is -inf)");
  }
  const std::size_t T = probs.frames(), K = probs.classes(), S = lat.states();
  Array gamma = Array::matrix(T, K);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      const double la = lat.a(t, s), lb = lat.b(t, s);
      if (la == kNegInf || lb == kNegInf) continue;
      const int k = lat.extended[s];
      gamma(t, static_cast<std::size_t>(k)) += std::exp(la + lb - probs(t, k) - lat.log_likelihood);
    }
  }
  return gamma;
}

}  // namespace

Array ctc_occupancy(const FrameLogProbs& probs, const LabelSequence& y) {
  return occupancy_from_lattice(build_lattice(probs, y), probs);
}

Array ctc_grad(const FrameLogProbs& probs, const LabelSequence& y) {
  Array g = ctc_occupancy(probs, y);
  for (std::size_t t = 0; t < probs.frames(); ++t)
    for (std::size_t k = 0; k < probs.classes(); ++k) g(t, k) -= std::exp(probs(t, k));
  return g;
}

LogProb brute_force_log_likelihood(const FrameLogProbs& probs, const LabelSequence& y) {
  check_labels(probs, y);
  const std::size_t T = probs.frames(), K = probs.classes();
  double count = 1.0;
  for (std::size_t t = 0; t < T; ++t) count *= static_cast<double>(K);
  if (count > 1e7) throw ContractError("brute_force_log_likelihood: more than 1e7 paths");

  std::vector<double> matches;
  Path path(T, 0);
  const int blank = probs.blank();
  while (true) {
    if (collapse(path, blank) == y) {
      double lp = 0.0;
      for (std::size_t t = 0; t < T; ++t) lp += probs(t, static_cast<std::size_t>(path[t]));
      matches.push_back(lp);
    }
    std::size_t t = 0;
    while (t < T && ++path[t] == static_cast<int>(K)) path[t++] = 0;
    if (t == T) break;
  }
  return matches.empty() ? kNegInf : log_sum_exp(matches);
}

ad::Tensor ctc_log_likelihood(const ad::Tensor& log_probs, const LabelSequence& y) {
  FrameLogProbs probs(log_probs.value());
  CtcLattice lat = build_lattice(probs, y);
  const double ll = lat.log_likelihood;
  return ad::make_op(Array::scalar(ll), {log_probs},
                     [lat = std::move(lat), probs = std::move(probs)](ad::Node& self) {
                       // d log p / d log_probs(t, k) is the occupancy gamma(t, k).
                       const Array gamma = occupancy_from_lattice(lat, probs);
                       auto& g = self.parents[0]->grad_buffer().data;
                       const double g0 = self.grad.data[0];
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * gamma.data[i];
                     });
}

}  // namespace vctc
