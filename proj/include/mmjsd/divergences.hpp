#pragma once

// Generalised Jensen-Shannon divergence over M unimodal posteriors plus a
// fixed prior, under the arithmetic mean (Monte Carlo) and the geometric mean
// (closed form), and the Jensen upper bound on the KL of a mixture.
// Everything is in nats. A zero weight drops its term entirely.

#include "mmjsd/gaussians.hpp"
#include "mmjsd/rng.hpp"

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace mmjsd {

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Running mean/variance accumulator (Welford).
class RunningStats {
 public:
  void push(double x) {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }
  std::size_t count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  /// Standard error of the mean.
  double std_error() const noexcept { return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

namespace detail {

inline std::vector<DiagGaussian> with_prior(std::span<const DiagGaussian> dists, const DiagGaussian& prior) {
  std::vector<DiagGaussian> all(dists.begin(), dists.end());
  all.push_back(prior);
  for (const auto& q : all) require_same_dim(q.dim(), prior.dim(), "divergence");
  return all;
}

}  // namespace detail

/// Monte-Carlo estimate of sum_j pi_j KL(q_j || f) where f is the pi-weighted
/// arithmetic mixture of the M posteriors and the prior.
inline McEstimate js_arithmetic_mc(std::span<const DiagGaussian> dists, const DiagGaussian& prior,
                                   const DistributionWeights& weights, std::size_t samples, Rng& rng) {
  if (samples == 0) throw std::invalid_argument("js_arithmetic_mc: zero samples");
  if (weights.size() != dists.size() + 1)
    throw std::invalid_argument("js_arithmetic_mc: need M+1 weights for M distributions plus the prior");
  const auto all = detail::with_prior(dists, prior);
  const auto pi = weights.values();
  std::vector<double> noise(prior.dim());
  McEstimate est;
  double var = 0.0;
  for (std::size_t j = 0; j < all.size(); ++j) {
    if (pi[j] == 0.0) continue;
    RunningStats stats;
    for (std::size_t s = 0; s < samples; ++s) {
      rng.fill_normal(std::span<double>(noise));
      const auto z = reparam_sample(all[j], noise);
      stats.push(gaussian_logpdf(all[j], z) - mixture_logpdf(all, pi, z));
    }
    est.value += pi[j] * stats.mean();
    var += pi[j] * pi[j] * stats.variance() / static_cast<double>(samples);
  }
  est.std_error = std::sqrt(var);
  return est;
}

/// JS divergence with the geometric-mean (product-of-experts) dynamic prior, in closed form.
inline double js_geometric_closed(std::span<const DiagGaussian> dists, const DiagGaussian& prior,
                                  const DistributionWeights& weights) {
  if (weights.size() != dists.size() + 1)
    throw std::invalid_argument("js_geometric_closed: need M+1 weights for M distributions plus the prior");
  const auto all = detail::with_prior(dists, prior);
  const auto pi = weights.values();
  const DiagGaussian poe = poe_geometric_mean(all, pi);
  double js = 0.0;
  for (std::size_t j = 0; j < all.size(); ++j)
    if (pi[j] != 0.0) js += pi[j] * kl_diag(all[j], poe);
  return js;
}

/// sum_j w_j KL(q_j || prior): upper bound on KL(sum_j w_j q_j || prior) by convexity.
inline double mixture_kl_jensen_bound(std::span<const DiagGaussian> dists, std::span<const double> weights,
                                      const DiagGaussian& prior) {
  ::mmjsd::detail::check_weights(weights, dists.size(), "mixture_kl_jensen_bound");
  double bound = 0.0;
  for (std::size_t j = 0; j < dists.size(); ++j) {
    ::mmjsd::detail::require_same_dim(dists[j].dim(), prior.dim(), "mixture_kl_jensen_bound");
    if (weights[j] != 0.0) bound += weights[j] * kl_diag(dists[j], prior);
  }
  return bound;
}

// ---------------------------------------------------------------------------
// Batched, differentiable forms used by the training objectives (n x 1 results).

/// Closed-form geometric JS of the posteriors and N(0, I), per row.
template <class T>
ad::Var<T> js_geometric(const std::vector<GaussianVar<T>>& posteriors, std::span<const double> pi) {
  if (posteriors.empty() || pi.size() != posteriors.size() + 1)
    throw std::invalid_argument("js_geometric: need M+1 weights for M posteriors plus the prior");
  auto& tape = *posteriors.front().mean.tape();
  std::vector<GaussianVar<T>> all = posteriors;
  all.push_back(standard_normal(tape, posteriors.front().batch(), posteriors.front().dim()));
  const GaussianVar<T> poe = poe_geometric_mean(all, pi);
  ad::Var<T> js;
  for (std::size_t j = 0; j < all.size(); ++j) {
    if (pi[j] == 0.0) continue;
    auto term = ad::scale(kl_diag(all[j], poe), static_cast<T>(pi[j]));
    js = js.valid() ? js + term : term;
  }
  return js;
}

/// Monte-Carlo arithmetic JS of the posteriors and N(0, I), per row, using
/// `samples` reparameterised draws per component.
template <class T>
ad::Var<T> js_arithmetic(const std::vector<GaussianVar<T>>& posteriors, std::span<const double> pi,
                         std::size_t samples, Rng& rng) {
  using namespace ad;
  if (posteriors.empty() || pi.size() != posteriors.size() + 1)
    throw std::invalid_argument("js_arithmetic: need M+1 weights for M posteriors plus the prior");
  if (samples == 0) throw std::invalid_argument("js_arithmetic: zero samples");
  auto& tape = *posteriors.front().mean.tape();
  const std::size_t n = posteriors.front().batch(), d = posteriors.front().dim();
  std::vector<GaussianVar<T>> all = posteriors;
  all.push_back(standard_normal(tape, n, d));
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < all.size(); ++k)
    if (pi[k] != 0.0) active.push_back(k);

  Var<T> js;
  for (std::size_t j : active) {
    Var<T> acc;
    for (std::size_t s = 0; s < samples; ++s) {
      Tensor<T> noise({n, d});
      rng.fill_normal(noise.values());
      auto z = reparam_sample(all[j], noise);
      std::vector<Var<T>> comps;
      for (std::size_t k : active)
        comps.push_back(shift(gaussian_logpdf(all[k], z), static_cast<T>(std::log(pi[k]))));
      auto log_mix = logsumexp(concat(comps, 1), 1);
      auto term = gaussian_logpdf(all[j], z) - log_mix;
      acc = acc.valid() ? acc + term : term;
    }
    auto weighted = scale(acc, static_cast<T>(pi[j] / static_cast<double>(samples)));
    js = js.valid() ? js + weighted : weighted;
  }
  return js;
}

/// sum_j w_j KL(q_j || N(0, I)) per row.
template <class T>
ad::Var<T> mixture_kl_jensen_bound(const std::vector<GaussianVar<T>>& posteriors, std::span<const double> weights) {
  ::mmjsd::detail::check_weights(weights, posteriors.size(), "mixture_kl_jensen_bound");
  ad::Var<T> bound;
  for (std::size_t j = 0; j < posteriors.size(); ++j) {
    if (weights[j] == 0.0) continue;
    auto term = ad::scale(kl_standard(posteriors[j]), static_cast<T>(weights[j]));
    bound = bound.valid() ? bound + term : term;
  }
  return bound;
}

}  // namespace mmjsd
