#include "vctc/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "vctc/ctc.hpp"
#include "vctc/error.hpp"

namespace vctc::oracle {

Quadrature gauss_hermite(std::size_t n) {
  detail::require(n >= 1 && n <= 200, "gauss_hermite: 1 <= n <= 200");
  Quadrature q;
  q.nodes.assign(n, 0.0);
  q.weights.assign(n, 0.0);
  const double pim4 = std::pow(std::numbers::pi, -0.25);
  const std::size_t m = (n + 1) / 2;
  double z = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    // Initial guesses for the largest roots, then extrapolation from the
    // previous two.
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * q.nodes[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * q.nodes[1];
    } else {
      z = 2.0 * z - q.nodes[i - 2];
    }
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      // Orthonormal Hermite recurrence.
      double p1 = pim4, p2 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        const double jj = static_cast<double>(j);
        p1 = z * std::sqrt(2.0 / (jj + 1.0)) * p2 - std::sqrt(jj / (jj + 1.0)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 3e-15 * std::max(1.0, std::abs(z))) break;
    }
    q.nodes[i] = z;
    q.nodes[n - 1 - i] = -z;
    q.weights[i] = 2.0 / (pp * pp);
    q.weights[n - 1 - i] = q.weights[i];
  }
  return q;
}

double log_normal_pdf(double z, double mu, double log_var) {
  const double d = z - mu;
  return -0.5 * (std::log(2.0 * std::numbers::pi) + log_var + d * d * std::exp(-log_var));
}

double kl_quadrature_1d(double mu_q, double lv_q, double mu_p, double lv_p, std::size_t points) {
  const Quadrature gh = gauss_hermite(points);
  const double sigma = std::exp(0.5 * lv_q);
  double acc = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double z = mu_q + std::numbers::sqrt2 * sigma * gh.nodes[i];
    acc += gh.weights[i] * (log_normal_pdf(z, mu_q, lv_q) - log_normal_pdf(z, mu_p, lv_p));
  }
  return acc / std::sqrt(std::numbers::pi);
}

Estimate kl_monte_carlo(std::span<const double> mu_q, std::span<const double> lv_q, std::span<const double> mu_p,
                        std::span<const double> lv_p, std::size_t samples, Rng& rng) {
  const std::size_t d = mu_q.size();
  detail::require(lv_q.size() == d && mu_p.size() == d && lv_p.size() == d, "kl_monte_carlo: size mismatch");
  detail::require(samples >= 2, "kl_monte_carlo: need at least two samples");
  // Welford running moments.
  double mean = 0.0, m2 = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    double v = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double z = mu_q[k] + std::exp(0.5 * lv_q[k]) * rng.normal();
      v += log_normal_pdf(z, mu_q[k], lv_q[k]) - log_normal_pdf(z, mu_p[k], lv_p[k]);
    }
    const double delta = v - mean;
    mean += delta / static_cast<double>(s + 1);
    m2 += delta * (v - mean);
  }
  const double var = m2 / static_cast<double>(samples - 1);
  return {mean, std::sqrt(var / static_cast<double>(samples))};
}

std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric, double floor) {
  detail::require(analytic.size() == numeric.size(), "max_relative_error: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

CtcOracleReport check_ctc_against_enumeration(std::size_t instances, std::size_t max_frames, std::size_t max_symbols,
                                              std::size_t max_target, Rng& rng) {
  detail::require(max_frames >= 1 && max_symbols >= 1, "check_ctc_against_enumeration: empty ranges");
  CtcOracleReport rep;
  for (std::size_t n = 0; n < instances; ++n) {
    const std::size_t T = 1 + rng.below(max_frames);
    const std::size_t V = 1 + rng.below(max_symbols);
    const std::size_t U = rng.below(max_target + 1);
    Array logits({T, V + 1});
    for (double& v : logits.data) v = 3.0 * rng.normal();
    const FrameLogProbs probs = FrameLogProbs::from_logits(logits);
    LabelSequence y(U);
    for (int& l : y) l = static_cast<int>(rng.below(V));
    const LogProb dp = ctc_log_likelihood(probs, y);
    const LogProb bf = brute_force_log_likelihood(probs, y);
    ++rep.instances;
    if (dp == kNegInf || bf == kNegInf) {
      if (dp != bf) rep.max_abs_error = std::numeric_limits<double>::infinity();
      ++rep.infeasible;
      continue;
    }
    rep.max_abs_error = std::max(rep.max_abs_error, std::abs(dp - bf));
  }
  return rep;
}

}  // namespace vctc::oracle
