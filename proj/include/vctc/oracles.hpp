#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "vctc/numerics.hpp"

namespace vctc::oracle {

// Reference computations that share no code with the lattice recursions or
// the closed-form KL, used to cross-check them.

struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// n-point Gauss-Hermite rule for integrals against exp(-x^2).
Quadrature gauss_hermite(std::size_t n);

// KL(N(mu_q, e^lv_q) || N(mu_p, e^lv_p)) in one dimension as E_q[log q - log p]
// by Gauss-Hermite quadrature.
double kl_quadrature_1d(double mu_q, double lv_q, double mu_p, double lv_p, std::size_t points = 64);

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Sample mean and standard error of log q(z) - log p(z) for z ~ q, with q and
// p diagonal Gaussians given by parallel mean/log-variance vectors.
Estimate kl_monte_carlo(std::span<const double> mu_q, std::span<const double> lv_q, std::span<const double> mu_p,
                        std::span<const double> lv_p, std::size_t samples, Rng& rng);

double log_normal_pdf(double z, double mu, double log_var);

// Central differences of f at x, one coordinate at a time.
std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> x, double h = 1e-5);

// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor).
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor = 1e-8);

// Brute-force CTC check: log-likelihood by enumerating paths, against the
// lattice value, over random instances. Returns the largest absolute error.
struct CtcOracleReport {
  std::size_t instances = 0;
  std::size_t infeasible = 0;
  double max_abs_error = 0.0;
};
CtcOracleReport check_ctc_against_enumeration(std::size_t instances, std::size_t max_frames, std::size_t max_symbols,
                                              std::size_t max_target, Rng& rng);

}  // namespace vctc::oracle
