#pragma once

// Independent numerical oracles used by the test suites and `verify`:
// Monte-Carlo KL estimators and 1-D grid integration. They evaluate densities
// with their own arithmetic and never call the closed forms they check.

#include "mmjsd/divergences.hpp"
#include "mmjsd/gaussians.hpp"
#include "mmjsd/rng.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace mmjsd::oracle {

/// Direct diagonal-Gaussian log density.
inline double log_density(std::span<const double> mean, std::span<const double> variance, std::span<const double> x) {
  double lp = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - mean[i];
    lp += -0.5 * std::log(2.0 * M_PI * variance[i]) - d * d / (2.0 * variance[i]);
  }
  return lp;
}

inline std::vector<double> variances(const DiagGaussian& g) {
  std::vector<double> v(g.dim());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(g.log_var[i]);
  return v;
}

/// Monte-Carlo KL(q || p) = E_q[log q - log p] with `samples` evaluations drawn
/// as antithetic pairs (z, 2 mu - z); the standard error is taken over pair means.
inline McEstimate kl_mc(const DiagGaussian& q, const DiagGaussian& p, std::size_t samples, Rng& rng) {
  const std::size_t d = q.dim();
  const auto vq = variances(q);
  const auto vp = variances(p);
  std::vector<double> sq(d), inv_vp(d);
  double log_norm = 0.0;  // log q and log p normalisers differ by this constant
  for (std::size_t i = 0; i < d; ++i) {
    sq[i] = std::sqrt(vq[i]);
    inv_vp[i] = 1.0 / vp[i];
    log_norm += 0.5 * std::log(vp[i] / vq[i]);
  }
  const std::size_t pairs = std::max<std::size_t>(samples / 2, 1);
  constexpr std::size_t kBlock = 4096;
  std::vector<double> noise(kBlock * d);
  // sums of (value - shift) keep the variance accurate without a per-sample division
  double shift = 0.0, sum = 0.0, sum_sq = 0.0;
  for (std::size_t s0 = 0; s0 < pairs; s0 += kBlock) {
    const std::size_t len = std::min(kBlock, pairs - s0);
    rng.fill_normal(std::span<double>(noise.data(), len * d));
    for (std::size_t s = 0; s < len; ++s) {
      const double* e = noise.data() + s * d;
      double a = log_norm, b = log_norm;
      for (std::size_t i = 0; i < d; ++i) {
        const double za = q.mean[i] + sq[i] * e[i];
        const double zb = q.mean[i] - sq[i] * e[i];
        const double da = za - p.mean[i], db = zb - p.mean[i];
        const double quad_q = 0.5 * e[i] * e[i];
        a += -quad_q + 0.5 * da * da * inv_vp[i];
        b += -quad_q + 0.5 * db * db * inv_vp[i];
      }
      if (s0 + s == 0) shift = 0.5 * (a + b);
      const double v = 0.5 * (a + b) - shift;
      sum += v;
      sum_sq += v * v;
    }
  }
  const double n = static_cast<double>(pairs), mean = sum / n;
  const double var = pairs > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) : 0.0;
  return {shift + mean, std::sqrt(var / n)};
}

/// log of a weighted mixture density, evaluated directly.
inline double mixture_log_density(std::span<const DiagGaussian> dists, std::span<const double> weights,
                                  std::span<const double> x) {
  double m = -std::numeric_limits<double>::infinity();
  std::vector<double> t(dists.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < dists.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    t[k] = std::log(weights[k]) + log_density(dists[k].mean, variances(dists[k]), x);
    m = std::max(m, t[k]);
  }
  double s = 0.0;
  for (double v : t) s += std::exp(v - m);
  return m + std::log(s);
}

/// Draws one sample from a mixture: component by weight, then the component's Gaussian.
inline std::vector<double> sample_mixture(std::span<const DiagGaussian> dists, std::span<const double> weights,
                                          Rng& rng, std::size_t* component = nullptr) {
  double u = rng.uniform(), acc = 0.0;
  std::size_t k = 0;
  for (; k + 1 < dists.size(); ++k) {
    acc += weights[k];
    if (u < acc) break;
  }
  while (weights[k] == 0.0 && k > 0) --k;
  if (component) *component = k;
  std::vector<double> z(dists[k].dim());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = dists[k].mean[i] + std::exp(0.5 * dists[k].log_var[i]) * rng.normal();
  return z;
}

/// Monte-Carlo KL(sum_k w_k q_k || p).
inline McEstimate kl_mixture_mc(std::span<const DiagGaussian> dists, std::span<const double> weights,
                                const DiagGaussian& p, std::size_t samples, Rng& rng) {
  RunningStats stats;
  const auto vp = variances(p);
  for (std::size_t s = 0; s < samples; ++s) {
    const auto z = sample_mixture(dists, weights, rng);
    stats.push(mixture_log_density(dists, weights, z) - log_density(p.mean, vp, z));
  }
  return {stats.mean(), stats.std_error()};
}

/// Result of comparing a claimed 1-D geometric mean against grid integration.
struct GridCheck {
  double max_log_discrepancy = 0.0;
  double mass = 0.0;  // integral of the unnormalised product, for diagnostics
};

/// Integrates prod_k N(x; mu_k, s_k^2)^{w_k} on a uniform grid, renormalises it,
/// and reports the largest |log density difference| to `claimed` over the grid.
inline GridCheck grid_geometric_mean_check(std::span<const DiagGaussian> dists, std::span<const double> weights,
                                           const DiagGaussian& claimed, double lo, double hi, double step) {
  const std::size_t n = static_cast<std::size_t>(std::floor((hi - lo) / step)) + 1;
  std::vector<double> log_unnorm(n);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = lo + static_cast<double>(i) * step;
    double l = 0.0;
    for (std::size_t k = 0; k < dists.size(); ++k) {
      if (weights[k] == 0.0) continue;
      const double v = std::exp(dists[k].log_var[0]);
      const double d = x - dists[k].mean[0];
      l += weights[k] * (-0.5 * std::log(2.0 * M_PI * v) - d * d / (2.0 * v));
    }
    log_unnorm[i] = l;
    m = std::max(m, l);
  }
  // Trapezoid rule for the normaliser.
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += (i == 0 || i + 1 == n ? 0.5 : 1.0) * std::exp(log_unnorm[i] - m);
  const double log_z = m + std::log(s * step);
  GridCheck out;
  out.mass = std::exp(log_z);
  const double cv = std::exp(claimed.log_var[0]);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = lo + static_cast<double>(i) * step;
    const double d = x - claimed.mean[0];
    const double claimed_log = -0.5 * std::log(2.0 * M_PI * cv) - d * d / (2.0 * cv);
    out.max_log_discrepancy = std::max(out.max_log_discrepancy, std::abs((log_unnorm[i] - log_z) - claimed_log));
  }
  return out;
}

/// Trapezoid integral of exp(f) over [lo, hi].
inline double integrate_exp(const std::function<double(double)>& log_f, double lo, double hi, double step) {
  const std::size_t n = static_cast<std::size_t>(std::floor((hi - lo) / step)) + 1;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += (i == 0 || i + 1 == n ? 0.5 : 1.0) * std::exp(log_f(lo + static_cast<double>(i) * step));
  return s * step;
}

}  // namespace mmjsd::oracle
