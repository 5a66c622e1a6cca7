#include "vctc/variational.hpp"

#include <cmath>
#include <vector>

#include "vctc/error.hpp"

namespace vctc {

DiagGaussian DiagGaussian::at(std::size_t t) const { return {ad::row(mu, t), ad::row(log_var, t)}; }

ad::Tensor clamp_log_var(const ad::Tensor& log_var) { return ad::clamp(log_var, kLogVarMin, kLogVarMax); }

DiagGaussian stack_gaussians(std::span<const DiagGaussian> parts) {
  std::vector<ad::Tensor> mus, lvs;
  for (const DiagGaussian& g : parts) {
    detail::require(g.rows() == 1, "stack_gaussians: each part must be a single row");
    mus.push_back(g.mu);
    lvs.push_back(g.log_var);
  }
  return {ad::stack_rows(mus), ad::stack_rows(lvs)};
}

namespace {

void check(const DiagGaussian& g) {
  detail::require(g.mu.defined() && g.log_var.defined(), "DiagGaussian: undefined parameters");
  detail::require(g.mu.rows() == g.log_var.rows() && g.mu.cols() == g.log_var.cols(),
                  "DiagGaussian: mu and log_var extents differ");
}

}  // namespace

ad::Tensor reparameterize(const DiagGaussian& q, const Array& eps) {
  check(q);
  detail::require(eps.size() == q.mu.size(), "reparameterize: noise size mismatch");
  Array e(q.mu.shape(), eps.data);
  const ad::Tensor sigma = ad::exp(ad::scale(q.log_var, 0.5));
  return ad::add(q.mu, ad::mul(sigma, ad::Tensor::constant(std::move(e))));
}

ad::Tensor reparameterize(const DiagGaussian& q, Rng& rng) {
  check(q);
  return reparameterize(q, sample_standard_normal(rng, q.mu.shape()));
}

ad::Tensor kl_diag_gauss(const DiagGaussian& q, const DiagGaussian& p) {
  check(q);
  check(p);
  detail::require(q.mu.rows() == p.mu.rows() && q.mu.cols() == p.mu.cols(), "kl_diag_gauss: dimension mismatch");
  const ad::Tensor log_ratio = ad::sub(q.log_var, p.log_var);
  const ad::Tensor ratio = ad::exp(log_ratio);
  const ad::Tensor mahal = ad::mul(ad::square(ad::sub(q.mu, p.mu)), ad::exp(ad::neg(p.log_var)));
  const ad::Tensor inner = ad::shift(ad::sub(ad::sub(log_ratio, ratio), mahal), 1.0);
  return ad::scale(ad::sum(inner), -0.5);
}

ad::Tensor expected_kl_markov(const DiagGaussian& q_prev, const PriorFn& make_prior, const DiagGaussian& q_t, Rng& rng,
                              std::size_t samples) {
  detail::require(samples >= 1, "expected_kl_markov: need at least one sample");
  std::vector<ad::Tensor> terms;
  terms.reserve(samples);
  for (std::size_t l = 0; l < samples; ++l) {
    const ad::Tensor z_prev = reparameterize(q_prev, rng);
    terms.push_back(kl_diag_gauss(q_t, make_prior(z_prev)));
  }
  if (samples == 1) return terms[0];
  return ad::scale(ad::add_scalars(terms), 1.0 / static_cast<double>(samples));
}

PriorChain PriorChain::from_fixed(DiagGaussian priors) {
  check(priors);
  PriorChain c;
  c.steps = priors.rows();
  c.fixed = std::move(priors);
  return c;
}

PriorChain PriorChain::from_conditional(DiagGaussian first,
                                        std::function<DiagGaussian(std::size_t, const ad::Tensor&)> fn,
                                        std::size_t steps) {
  check(first);
  detail::require(first.rows() == 1, "PriorChain: first prior must be a single row");
  PriorChain c;
  c.steps = steps;
  c.first = std::move(first);
  c.conditional = std::move(fn);
  return c;
}

}  // namespace vctc
