#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>

#include "vctc/autodiff.hpp"
#include "vctc/numerics.hpp"

namespace vctc {

// Diagonal Gaussian N(mu, exp(log_var)). A tensor with T rows stands for T
// independent per-frame distributions, row t belonging to frame t.
struct DiagGaussian {
  ad::Tensor mu;
  ad::Tensor log_var;

  std::size_t rows() const { return mu.rows(); }
  std::size_t dim() const { return mu.cols(); }
  // Row t as its own distribution.
  DiagGaussian at(std::size_t t) const;
};

// Range applied to network-produced log-variances before they are used.
inline constexpr double kLogVarMin = -12.0;
inline constexpr double kLogVarMax = 12.0;
ad::Tensor clamp_log_var(const ad::Tensor& log_var);

DiagGaussian stack_gaussians(std::span<const DiagGaussian> parts);

// z = mu + exp(log_var / 2) * eps with eps ~ N(0, I) drawn from rng.
ad::Tensor reparameterize(const DiagGaussian& q, Rng& rng);
ad::Tensor reparameterize(const DiagGaussian& q, const Array& eps);

// KL(q || p) in closed form, summed over every element:
//   -1/2 sum_d [ log(s2_q / s2_p) - s2_q / s2_p - (mu_q - mu_p)^2 / s2_p + 1 ]
ad::Tensor kl_diag_gauss(const DiagGaussian& q, const DiagGaussian& p);

// Prior at step t built from a sample of z_{t-1}.
using PriorFn = std::function<DiagGaussian(const ad::Tensor& z_prev)>;

// Monte Carlo estimate of E_{z ~ q_prev}[ KL(q_t || make_prior(z)) ] with L
// reparameterized draws; gradients reach q_prev through the draws.
ad::Tensor expected_kl_markov(const DiagGaussian& q_prev, const PriorFn& make_prior, const DiagGaussian& q_t, Rng& rng,
                              std::size_t samples = 1);

// Per-step priors of a first-order Markov latent chain. Step 0 is always
// unconditional. When `fixed` is set the priors do not depend on z_{t-1}
// (they were computed from X alone) and its rows are the priors.
struct PriorChain {
  std::size_t steps = 0;
  // Prior for step t >= 1 given a draw of z_{t-1}.
  std::function<DiagGaussian(std::size_t t, const ad::Tensor& z_prev)> conditional;
  // Unconditional prior for step 0; unused when `fixed` is set.
  std::optional<DiagGaussian> first;
  std::optional<DiagGaussian> fixed;

  static PriorChain from_fixed(DiagGaussian priors);
  static PriorChain from_conditional(DiagGaussian first,
                                     std::function<DiagGaussian(std::size_t, const ad::Tensor&)> fn,
                                     std::size_t steps);
};

}  // namespace vctc
