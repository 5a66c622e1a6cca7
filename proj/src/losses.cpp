#include "vctc/losses.hpp"

#include <vector>

#include "vctc/error.hpp"

namespace vctc {

namespace {

LossBreakdown combine(ad::Tensor prediction, ad::Tensor regularization, double kl_weight) {
  LossBreakdown out;
  out.kl_weight = kl_weight;
  out.total = ad::sub(prediction, ad::scale(regularization, kl_weight));
  out.prediction = std::move(prediction);
  out.regularization = std::move(regularization);
  return out;
}

void check_frames(const ad::Tensor& log_probs, const DiagGaussian& q, std::size_t prior_rows) {
  detail::require(q.rows() == log_probs.rows(), "loss: posterior length differs from frame count");
  detail::require(prior_rows == log_probs.rows(), "loss: prior length differs from frame count");
}

}  // namespace

LossBreakdown loss_ctc(const ad::Tensor& log_probs, const LabelSequence& y) {
  LossBreakdown out;
  out.kl_weight = 0.0;
  out.prediction = ctc_log_likelihood(log_probs, y);
  out.regularization = ad::Tensor::constant(Array::scalar(0.0));
  out.total = out.prediction;
  return out;
}

LossBreakdown loss_ci(const ad::Tensor& log_probs, const LabelSequence& y, const DiagGaussian& q,
                      const DiagGaussian& p, double kl_weight) {
  check_frames(log_probs, q, p.rows());
  return combine(ctc_log_likelihood(log_probs, y), kl_diag_gauss(q, p), kl_weight);
}

LossBreakdown loss_markov(const ad::Tensor& log_probs, const LabelSequence& y, const DiagGaussian& q,
                          const PriorChain& priors, Rng& rng, std::size_t samples, double kl_weight) {
  check_frames(log_probs, q, priors.steps);
  if (priors.fixed) return combine(ctc_log_likelihood(log_probs, y), kl_diag_gauss(q, *priors.fixed), kl_weight);

  detail::require(priors.first.has_value() && static_cast<bool>(priors.conditional),
                  "loss_markov: prior chain has neither fixed nor conditional priors");
  std::vector<ad::Tensor> terms;
  terms.reserve(priors.steps);
  terms.push_back(kl_diag_gauss(q.at(0), *priors.first));
  for (std::size_t t = 1; t < priors.steps; ++t) {
    const PriorFn make_prior = [&priors, t](const ad::Tensor& z_prev) { return priors.conditional(t, z_prev); };
    terms.push_back(expected_kl_markov(q.at(t - 1), make_prior, q.at(t), rng, samples));
  }
  return combine(ctc_log_likelihood(log_probs, y), ad::add_scalars(terms), kl_weight);
}

}  // namespace vctc
