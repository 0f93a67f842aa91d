#pragma once

#include "mmjsd/autodiff.hpp"
#include "mmjsd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmjsd {

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;  // ln(2*pi)
inline constexpr double kMinLogVar = -20.0;
inline constexpr double kMaxLogVar = 10.0;

/// Diagonal-covariance Gaussian over a latent vector, parameterised by mean and log-variance.
struct DiagGaussian {
  std::vector<double> mean;
  std::vector<double> log_var;

  DiagGaussian() = default;
  DiagGaussian(std::vector<double> mu, std::vector<double> lv) : mean(std::move(mu)), log_var(std::move(lv)) {
    if (mean.size() != log_var.size())
      throw ShapeError("DiagGaussian: mean has " + std::to_string(mean.size()) + " entries, log_var has " +
                       std::to_string(log_var.size()));
  }

  static DiagGaussian standard(std::size_t dim) {
    return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
  }
  /// Isotropic helper: every dimension shares `mu` and `variance`.
  static DiagGaussian isotropic(std::size_t dim, double mu, double variance) {
    return {std::vector<double>(dim, mu), std::vector<double>(dim, std::log(variance))};
  }

  std::size_t dim() const noexcept { return mean.size(); }
  double variance(std::size_t i) const { return std::exp(log_var[i]); }
  double stddev(std::size_t i) const { return std::exp(0.5 * log_var[i]); }

  bool finite() const {
    return std::all_of(mean.begin(), mean.end(), [](double v) { return std::isfinite(v); }) &&
           std::all_of(log_var.begin(), log_var.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const DiagGaussian&, const DiagGaussian&) = default;
};

namespace detail {

inline void require_same_dim(std::size_t a, std::size_t b, const char* op) {
  if (a != b)
    throw ShapeError(std::string(op) + ": dimension mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
}

inline void check_weights(std::span<const double> w, std::size_t expected, const char* op) {
  if (w.size() != expected)
    throw std::invalid_argument(std::string(op) + ": expected " + std::to_string(expected) + " weights, got " +
                                std::to_string(w.size()));
  double s = 0.0;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(op) + ": weights must be non-negative");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument(std::string(op) + ": weights must sum to 1");
}

}  // namespace detail

/// Non-negative weights over M+1 distributions, summing to 1.
class DistributionWeights {
 public:
  explicit DistributionWeights(std::vector<double> pi) : pi_(std::move(pi)) {
    if (pi_.size() < 2) throw std::invalid_argument("DistributionWeights: need at least 2 entries");
    ::mmjsd::detail::check_weights(pi_, pi_.size(), "DistributionWeights");
  }
  static DistributionWeights uniform(std::size_t count) {
    return DistributionWeights(std::vector<double>(count, 1.0 / static_cast<double>(count)));
  }

  std::span<const double> values() const noexcept { return pi_; }
  std::size_t size() const noexcept { return pi_.size(); }
  double operator[](std::size_t i) const { return pi_[i]; }

  /// First `count` entries renormalised to sum to 1.
  std::vector<double> prefix_normalized(std::size_t count) const {
    std::vector<double> w(pi_.begin(), pi_.begin() + static_cast<std::ptrdiff_t>(count));
    double s = 0.0;
    for (double v : w) s += v;
    if (s <= 0.0) throw std::invalid_argument("DistributionWeights: prefix has zero mass");
    for (double& v : w) v /= s;
    return w;
  }

 private:
  std::vector<double> pi_;
};

/// Renormalises a non-negative weight vector restricted to `keep`.
inline std::vector<double> restrict_weights(std::span<const double> w, const std::vector<bool>& keep) {
  std::vector<double> out;
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (keep.at(i)) {
      out.push_back(w[i]);
      s += w[i];
    }
  if (out.empty() || s <= 0.0) throw std::invalid_argument("restrict_weights: no mass on the kept entries");
  for (double& v : out) v /= s;
  return out;
}

/// KL(q || p) in nats, closed form.
inline double kl_diag(const DiagGaussian& q, const DiagGaussian& p) {
  ::mmjsd::detail::require_same_dim(q.dim(), p.dim(), "kl_diag");
  double kl = 0.0;
  for (std::size_t i = 0; i < q.dim(); ++i) {
    const double d = q.mean[i] - p.mean[i];
    kl += 0.5 * (p.log_var[i] - q.log_var[i]) + 0.5 * (std::exp(q.log_var[i] - p.log_var[i]) + d * d * std::exp(-p.log_var[i])) -
          0.5;
  }
  return std::max(kl, 0.0);
}

inline std::vector<double> reparam_sample(const DiagGaussian& q, std::span<const double> noise) {
  ::mmjsd::detail::require_same_dim(q.dim(), noise.size(), "reparam_sample");
  std::vector<double> z(q.dim());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = q.mean[i] + q.stddev(i) * noise[i];
  return z;
}

inline double gaussian_logpdf(const DiagGaussian& q, std::span<const double> x) {
  ::mmjsd::detail::require_same_dim(q.dim(), x.size(), "gaussian_logpdf");
  double lp = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - q.mean[i];
    lp -= 0.5 * (kLogTwoPi + q.log_var[i] + d * d * std::exp(-q.log_var[i]));
  }
  return lp;
}

/// log sum_k w_k N(x; mu_k, sigma_k^2). Components with zero weight are skipped.
inline double mixture_logpdf(std::span<const DiagGaussian> dists, std::span<const double> weights,
                             std::span<const double> x) {
  if (dists.empty()) throw std::invalid_argument("mixture_logpdf: no components");
  ::mmjsd::detail::check_weights(weights, dists.size(), "mixture_logpdf");
  double m = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  terms.reserve(dists.size());
  for (std::size_t k = 0; k < dists.size(); ++k) {
    if (weights[k] == 0.0) continue;
    const double t = std::log(weights[k]) + gaussian_logpdf(dists[k], x);
    terms.push_back(t);
    m = std::max(m, t);
  }
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

/// Normalised weighted geometric mean of Gaussians: precisions add with the
/// weights, means combine precision-weighted. Zero-weight experts are ignored.
inline DiagGaussian poe_geometric_mean(std::span<const DiagGaussian> dists, std::span<const double> weights) {
  if (dists.empty()) throw std::invalid_argument("poe_geometric_mean: no distributions");
  ::mmjsd::detail::check_weights(weights, dists.size(), "poe_geometric_mean");
  if (std::count_if(weights.begin(), weights.end(), [](double w) { return w > 0.0; }) == 1)
    return dists[static_cast<std::size_t>(std::find_if(weights.begin(), weights.end(), [](double w) { return w > 0.0; }) -
                                          weights.begin())];
  const std::size_t d = dists.front().dim();
  std::vector<double> precision(d, 0.0), weighted_mean(d, 0.0);
  for (std::size_t k = 0; k < dists.size(); ++k) {
    if (weights[k] == 0.0) continue;
    ::mmjsd::detail::require_same_dim(dists[k].dim(), d, "poe_geometric_mean");
    for (std::size_t i = 0; i < d; ++i) {
      const double prec = weights[k] * std::exp(-dists[k].log_var[i]);
      precision[i] += prec;
      weighted_mean[i] += prec * dists[k].mean[i];
    }
  }
  DiagGaussian out = DiagGaussian::standard(d);
  for (std::size_t i = 0; i < d; ++i) {
    out.mean[i] = weighted_mean[i] / precision[i];
    out.log_var[i] = -std::log(precision[i]);
  }
  return out;
}

/// Per-dimension first and second moments of a sample set.
struct GaussianMoments {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::size_t count = 0;
};

/// Moments of the rows of `samples` (n x d). Needs n >= 2.
inline GaussianMoments estimate_moments(const Tensor<double>& samples) {
  const std::size_t n = samples.rows(), d = samples.cols();
  if (n < 2) throw std::invalid_argument("estimate_moments: need at least 2 samples");
  GaussianMoments m{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0), n};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) m.mean[c] += samples(r, c);
  for (double& v : m.mean) v /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = samples(r, c) - m.mean[c];
      m.stddev[c] += diff * diff;
    }
  for (double& v : m.stddev) v = std::sqrt(v / static_cast<double>(n - 1));
  return m;
}

/// Diagonal Frechet distance: |mu_a - mu_b|^2 + sum (sigma_a - sigma_b)^2.
inline double frechet_gaussian_distance(const GaussianMoments& a, const GaussianMoments& b) {
  if (a.count < 2 || b.count < 2) throw std::invalid_argument("frechet_gaussian_distance: degenerate sample count");
  ::mmjsd::detail::require_same_dim(a.mean.size(), b.mean.size(), "frechet_gaussian_distance");
  double dist = 0.0;
  for (std::size_t i = 0; i < a.mean.size(); ++i) {
    const double dm = a.mean[i] - b.mean[i];
    const double ds = a.stddev[i] - b.stddev[i];
    dist += dm * dm + ds * ds;
  }
  return dist;
}

// ---------------------------------------------------------------------------
// Batched, differentiable counterparts. Each row of mean/log_var (n x d) is one
// distribution; per-row reductions return n x 1 columns.

template <class T>
struct GaussianVar {
  ad::Var<T> mean;
  ad::Var<T> log_var;

  std::size_t batch() const { return mean.rows(); }
  std::size_t dim() const { return mean.cols(); }
};

/// N(0, I) rows as constants on `tape`.
template <class T>
GaussianVar<T> standard_normal(ad::Tape<T>& tape, std::size_t batch, std::size_t dim) {
  return {tape.constant(Tensor<T>({batch, dim})), tape.constant(Tensor<T>({batch, dim}))};
}

/// Per-row KL(q || p), n x 1.
template <class T>
ad::Var<T> kl_diag(const GaussianVar<T>& q, const GaussianVar<T>& p) {
  if (q.mean.shape() != p.mean.shape()) throw ShapeError("kl_diag: batch shapes differ");
  using namespace ad;
  auto inv_var_p = exp(-p.log_var);
  auto ratio = mul(exp(q.log_var), inv_var_p);
  auto maha = mul(square(q.mean - p.mean), inv_var_p);
  auto per_dim = scale(sub(p.log_var, q.log_var) + ratio + maha, T{0.5});
  return shift(sum(per_dim, 1), T{-0.5} * static_cast<T>(q.dim()));
}

/// Per-row KL(q || N(0, I)), n x 1.
template <class T>
ad::Var<T> kl_standard(const GaussianVar<T>& q) {
  using namespace ad;
  auto per_dim = scale(exp(q.log_var) + square(q.mean) - q.log_var, T{0.5});
  return shift(sum(per_dim, 1), T{-0.5} * static_cast<T>(q.dim()));
}

template <class T>
ad::Var<T> reparam_sample(const GaussianVar<T>& q, const Tensor<T>& noise) {
  using namespace ad;
  if (noise.shape() != q.mean.shape()) throw ShapeError("reparam_sample: noise shape does not match");
  auto& tape = *q.mean.tape();
  return q.mean + mul(exp(scale(q.log_var, T{0.5})), tape.constant(noise));
}

/// Per-row log density, n x 1.
template <class T>
ad::Var<T> gaussian_logpdf(const GaussianVar<T>& q, const ad::Var<T>& z) {
  using namespace ad;
  auto per_dim = q.log_var + mul(square(z - q.mean), exp(-q.log_var));
  return shift(scale(sum(per_dim, 1), T{-0.5}), static_cast<T>(-0.5 * kLogTwoPi) * static_cast<T>(q.dim()));
}

/// Weighted geometric mean (product of experts); weights must sum to 1.
/// Zero-weight experts are skipped.
template <class T>
GaussianVar<T> poe_geometric_mean(const std::vector<GaussianVar<T>>& experts, std::span<const double> weights) {
  using namespace ad;
  if (experts.empty()) throw std::invalid_argument("poe_geometric_mean: no distributions");
  ::mmjsd::detail::check_weights(weights, experts.size(), "poe_geometric_mean");
  if (std::count_if(weights.begin(), weights.end(), [](double w) { return w > 0.0; }) == 1)
    return experts[static_cast<std::size_t>(std::find_if(weights.begin(), weights.end(), [](double w) { return w > 0.0; }) -
                                            weights.begin())];
  Var<T> precision, weighted_mean;
  bool first = true;
  for (std::size_t k = 0; k < experts.size(); ++k) {
    if (weights[k] == 0.0) continue;
    if (!first && experts[k].mean.shape() != precision.shape()) throw ShapeError("poe_geometric_mean: shapes differ");
    auto prec = scale(exp(-experts[k].log_var), static_cast<T>(weights[k]));
    auto pm = mul(prec, experts[k].mean);
    precision = first ? prec : precision + prec;
    weighted_mean = first ? pm : weighted_mean + pm;
    first = false;
  }
  auto log_var = -log(precision);
  return {mul(weighted_mean, exp(log_var)), log_var};
}

}  // namespace mmjsd
