#pragma once

#include <cstddef>

#include "vctc/autodiff.hpp"
#include "vctc/ctc.hpp"
#include "vctc/variational.hpp"

namespace vctc {

// Objective split into its lower-bound components, in the maximization
// convention: total = prediction - kl_weight * regularization. Training
// minimizes -total.
struct LossBreakdown {
  ad::Tensor prediction;      // log p(y | X[, Z])
  ad::Tensor regularization;  // summed KL, >= 0
  ad::Tensor total;
  double kl_weight = 1.0;

  double prediction_value() const { return prediction.item(); }
  double regularization_value() const { return regularization.item(); }
  double total_value() const { return total.item(); }
};

// Plain CTC: prediction = log p(y | X), no regularization.
LossBreakdown loss_ctc(const ad::Tensor& log_probs, const LabelSequence& y);

// Conditional-independence bound: log p(y | X, Z) for the sampled Z behind
// log_probs, minus sum_t KL(q_t || p_t). q and p carry one row per frame.
LossBreakdown loss_ci(const ad::Tensor& log_probs, const LabelSequence& y, const DiagGaussian& q,
                      const DiagGaussian& p, double kl_weight = 1.0);

// Markov bound: prediction as in loss_ci, minus
//   KL(q_1 || p_1) + sum_{t>1} E_{z ~ q_{t-1}} KL(q_t || p(z_t | z, X)).
// With z-independent priors the expectation is exact and no draws are made;
// otherwise each expectation uses `samples` reparameterized draws.
LossBreakdown loss_markov(const ad::Tensor& log_probs, const LabelSequence& y, const DiagGaussian& q,
                          const PriorChain& priors, Rng& rng, std::size_t samples = 1, double kl_weight = 1.0);

}  // namespace vctc
