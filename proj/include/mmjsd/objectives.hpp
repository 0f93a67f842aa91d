#pragma once

// Training objectives as differentiable losses with per-term breakdowns:
// joint and subset ELBO, the MoE Jensen bound, mmJSD and factorized mmJSD.
// Every loss is the negated bound averaged over the batch.

#include "mmjsd/divergences.hpp"
#include "mmjsd/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmjsd {

enum class PriorKind { arithmetic, geometric };

inline const char* to_string(PriorKind k) { return k == PriorKind::arithmetic ? "arithmetic" : "geometric"; }

/// Largest modality gets 1; modality j gets max_count / count_j.
inline std::vector<double> likelihood_scales(const std::vector<std::size_t>& counts) {
  if (counts.empty()) throw std::invalid_argument("likelihood_scales: no modalities");
  const std::size_t largest = *std::max_element(counts.begin(), counts.end());
  std::vector<double> out;
  for (std::size_t c : counts) {
    if (c == 0) throw std::invalid_argument("likelihood_scales: zero element count");
    out.push_back(static_cast<double>(largest) / static_cast<double>(c));
  }
  return out;
}

struct WeightConfig {
  DistributionWeights pi = DistributionWeights::uniform(2);
  double beta = 5.0;
  double beta_style = 1.0;
  std::vector<double> likelihood_scales;
  std::vector<double> beta_per_modality;
  std::size_t js_samples = 1;  // draws per component for the arithmetic JS estimate

  /// Uniform pi over M+1, beta 5, beta_style = M, scales from element counts,
  /// unit per-modality style weights.
  static WeightConfig defaults(const std::vector<ModalitySpec>& specs) {
    WeightConfig w;
    const std::size_t m = specs.size();
    w.pi = DistributionWeights::uniform(m + 1);
    w.beta_style = static_cast<double>(m);
    std::vector<std::size_t> counts;
    for (const auto& s : specs) counts.push_back(s.element_count);
    w.likelihood_scales = ::mmjsd::likelihood_scales(counts);
    w.beta_per_modality.assign(m, 1.0);
    return w;
  }

  void validate(std::size_t modalities) const {
    if (pi.size() != modalities + 1)
      throw std::invalid_argument("weights: pi has " + std::to_string(pi.size()) + " entries, need " +
                                  std::to_string(modalities + 1));
    auto ok = [](double v) { return std::isfinite(v) && v >= 0.0; };
    if (!ok(beta) || !ok(beta_style)) throw std::invalid_argument("weights: beta values must be finite and >= 0");
    if (likelihood_scales.size() != modalities || beta_per_modality.size() != modalities)
      throw std::invalid_argument("weights: per-modality lists must have one entry per modality");
    for (double v : likelihood_scales)
      if (!ok(v) || v == 0.0) throw std::invalid_argument("weights: likelihood scales must be positive");
    for (double v : beta_per_modality)
      if (!ok(v)) throw std::invalid_argument("weights: beta_per_modality must be finite and >= 0");
    if (js_samples == 0) throw std::invalid_argument("weights: js_samples must be >= 1");
  }
};

/// Batch means of every term. total = -(sum reconstruction - beta * shared
/// - beta_style * sum style). style_divergence already includes beta_j.
struct ObjectiveBreakdown {
  std::vector<double> reconstruction;
  double shared_divergence = 0.0;
  std::vector<double> style_divergence;
  double total = 0.0;

  double recombined(const WeightConfig& w) const {
    double recon = 0.0, style = 0.0;
    for (double r : reconstruction) recon += r;
    for (double s : style_divergence) style += s;
    return -(recon - w.beta * shared_divergence - w.beta_style * style);
  }
};

template <class T>
struct Objective {
  ad::Var<T> loss;  // scalar on the tape
  ObjectiveBreakdown breakdown;
};

namespace detail {

template <class T>
void require_unfactorized(const MultimodalVAE<T>& model, const char* op) {
  if (model.partition().has_style())
    throw std::invalid_argument(std::string(op) + " needs a model without style subspaces; use mmjsd_factorized");
}

template <class T>
void require_complete(const ModalityBatch<T>& batch, const char* op) {
  batch.validate();
  if (!batch.complete()) throw std::invalid_argument(std::string(op) + " needs every modality in the batch");
}

template <class T>
std::vector<UnimodalPosterior<T>> encode_masked(const BoundModel<T>& m, const ModalityBatch<T>& batch,
                                                const std::vector<bool>& mask, std::vector<ad::Var<T>>& data) {
  std::vector<UnimodalPosterior<T>> posts(batch.modalities());
  data.clear();
  for (std::size_t j = 0; j < batch.modalities(); ++j) {
    data.push_back(m.tape->constant(batch.data[j]));
    if (mask[j]) posts[j] = encode(m, j, data[j]);
  }
  return posts;
}

/// Assembles reconstruction, shared and style terms into the loss.
/// `content` is one shared-space draw per row; `shared_div` is n x 1 (unweighted).
template <class T>
Objective<T> assemble(const BoundModel<T>& m, const std::vector<ad::Var<T>>& data,
                      const std::vector<UnimodalPosterior<T>>& posts, const ad::Var<T>& content,
                      const ad::Var<T>& shared_div, const WeightConfig& w, Rng& rng) {
  using namespace ad;
  const auto& model = *m.model;
  const std::size_t n = content.rows();
  Objective<T> obj;
  Var<T> recon_sum, style_sum;
  for (std::size_t j = 0; j < model.modalities(); ++j) {
    Var<T> latent = content;
    if (const std::size_t s = model.partition().style(j); s > 0) {
      const auto& q = *posts[j].style;
      latent = concat<T>({content, reparam_sample(q, normal_noise<T>(rng, n, s))}, 1);
      auto style = scale(mean(kl_standard(q)), static_cast<T>(w.beta_per_modality[j]));
      obj.breakdown.style_divergence.push_back(static_cast<double>(style.item()));
      style_sum = style_sum.valid() ? style_sum + style : style;
    } else {
      obj.breakdown.style_divergence.push_back(0.0);
    }
    auto ll = scale(mean(log_likelihood(model.spec(j), decode(m, j, latent), data[j])),
                    static_cast<T>(w.likelihood_scales[j]));
    obj.breakdown.reconstruction.push_back(static_cast<double>(ll.item()));
    recon_sum = recon_sum.valid() ? recon_sum + ll : ll;
  }
  auto shared = mean(shared_div);
  obj.breakdown.shared_divergence = static_cast<double>(shared.item());
  obj.loss = scale(shared, static_cast<T>(w.beta)) - recon_sum;
  if (style_sum.valid()) obj.loss = obj.loss + scale(style_sum, static_cast<T>(w.beta_style));
  obj.breakdown.total = static_cast<double>(obj.loss.item());
  return obj;
}

/// Renormalised pi-prefix restricted to the masked modalities.
inline std::vector<double> modality_weights(const WeightConfig& w, const std::vector<bool>& mask) {
  const auto prefix = w.pi.prefix_normalized(mask.size());
  return restrict_weights(prefix, mask);
}

template <class T>
std::vector<GaussianVar<T>> contents(const std::vector<UnimodalPosterior<T>>& posts, const std::vector<bool>& mask) {
  std::vector<GaussianVar<T>> out;
  for (std::size_t j = 0; j < posts.size(); ++j)
    if (mask[j]) out.push_back(posts[j].content);
  return out;
}

}  // namespace detail

/// ELBO with inference from the masked modalities only and reconstruction of
/// all of them. PoE fuses with the pi-prefix weights and takes KL in closed
/// form; MoE samples the mixture and uses the Jensen bound on its KL.
template <class T>
Objective<T> elbo_subset(const BoundModel<T>& m, const ModalityBatch<T>& batch, const std::vector<bool>& mask,
                         Fusion fusion, const WeightConfig& w, Rng& rng) {
  batch.validate();
  detail::require_unfactorized(*m.model, "elbo_subset");
  w.validate(m.model->modalities());
  if (mask.size() != batch.modalities() || std::none_of(mask.begin(), mask.end(), [](bool b) { return b; }))
    throw std::invalid_argument("elbo_subset: mask must select at least one of the batch's modalities");
  std::vector<ad::Var<T>> data;
  const auto posts = detail::encode_masked(m, batch, mask, data);
  const auto comps = detail::contents(posts, mask);
  const auto weights = detail::modality_weights(w, mask);
  if (fusion == Fusion::poe) {
    const auto q = poe_geometric_mean(comps, weights);
    const auto z = reparam_sample(q, normal_noise<T>(rng, q.batch(), q.dim()));
    return detail::assemble(m, data, posts, z, kl_standard(q), w, rng);
  }
  const auto z = sample_mixture(comps, weights, rng);
  return detail::assemble(m, data, posts, z, mixture_kl_jensen_bound(comps, weights), w, rng);
}

template <class T>
Objective<T> elbo_joint(const BoundModel<T>& m, const ModalityBatch<T>& batch, Fusion fusion, const WeightConfig& w,
                        Rng& rng) {
  detail::require_complete(batch, "elbo_joint");
  return elbo_subset(m, batch, std::vector<bool>(batch.modalities(), true), fusion, w, rng);
}

/// Reconstruction under a mixture-sampled z; divergence sum_j pi'_j KL(q_j || N(0, I)).
template <class T>
Objective<T> moe_bound(const BoundModel<T>& m, const ModalityBatch<T>& batch, const WeightConfig& w, Rng& rng) {
  detail::require_complete(batch, "moe_bound");
  return elbo_subset(m, batch, std::vector<bool>(batch.modalities(), true), Fusion::moe, w, rng);
}

/// Factorized mmJSD: c drawn from the pi-prefix mixture of content posteriors,
/// s_j from q(s_j|x_j); shared divergence is the JS of the content posteriors
/// and N(0, I) under pi, style divergence beta_j KL(q(s_j|x_j) || N(0, I)).
template <class T>
Objective<T> mmjsd_factorized(const BoundModel<T>& m, const ModalityBatch<T>& batch, PriorKind prior,
                              const WeightConfig& w, Rng& rng) {
  detail::require_complete(batch, "mmjsd");
  w.validate(m.model->modalities());
  const std::vector<bool> all(batch.modalities(), true);
  std::vector<ad::Var<T>> data;
  const auto posts = detail::encode_masked(m, batch, all, data);
  const auto comps = detail::contents(posts, all);
  const auto z = sample_mixture(comps, detail::modality_weights(w, all), rng);
  ad::Var<T> js;
  if (prior == PriorKind::geometric)
    js = js_geometric(comps, w.pi.values());
  else
    js = js_arithmetic(comps, w.pi.values(), w.js_samples, rng);
  return detail::assemble(m, data, posts, z, js, w, rng);
}

template <class T>
Objective<T> mmjsd(const BoundModel<T>& m, const ModalityBatch<T>& batch, PriorKind prior, const WeightConfig& w,
                   Rng& rng) {
  detail::require_unfactorized(*m.model, "mmjsd");
  return mmjsd_factorized(m, batch, prior, w, rng);
}

enum class ObjectiveKind { elbo_joint, moe_bound, mmjsd, mmjsd_factorized };

inline const char* to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::elbo_joint: return "elbo_joint";
    case ObjectiveKind::moe_bound: return "moe_bound";
    case ObjectiveKind::mmjsd: return "mmjsd";
    case ObjectiveKind::mmjsd_factorized: return "mmjsd_factorized";
  }
  return "?";
}

inline ObjectiveKind parse_objective(const std::string& s) {
  for (auto k : {ObjectiveKind::elbo_joint, ObjectiveKind::moe_bound, ObjectiveKind::mmjsd, ObjectiveKind::mmjsd_factorized})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown objective '" + s + "'");
}

inline PriorKind parse_prior(const std::string& s) {
  if (s == "geometric") return PriorKind::geometric;
  if (s == "arithmetic") return PriorKind::arithmetic;
  throw std::invalid_argument("unknown prior kind '" + s + "'");
}

inline Fusion parse_fusion(const std::string& s) {
  if (s == "poe") return Fusion::poe;
  if (s == "moe") return Fusion::moe;
  throw std::invalid_argument("unknown fusion '" + s + "'");
}

/// Dispatch used by the trainer. `fusion` applies to elbo_joint only.
template <class T>
Objective<T> evaluate_objective(ObjectiveKind kind, const BoundModel<T>& m, const ModalityBatch<T>& batch,
                                Fusion fusion, PriorKind prior, const WeightConfig& w, Rng& rng) {
  switch (kind) {
    case ObjectiveKind::elbo_joint: return elbo_joint(m, batch, fusion, w, rng);
    case ObjectiveKind::moe_bound: return moe_bound(m, batch, w, rng);
    case ObjectiveKind::mmjsd: return mmjsd(m, batch, prior, w, rng);
    case ObjectiveKind::mmjsd_factorized: return mmjsd_factorized(m, batch, prior, w, rng);
  }
  throw std::logic_error("unreachable objective kind");
}

}  // namespace mmjsd
