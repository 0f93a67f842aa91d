#pragma once

// Per-modality MLP encoders and decoders over a latent split into shared
// content c and per-modality style s_j, with subset fusion and generation.

#include "mmjsd/autodiff.hpp"
#include "mmjsd/gaussians.hpp"
#include "mmjsd/modality.hpp"
#include "mmjsd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmjsd {

struct LatentPartition {
  std::size_t c_dim = 16;
  std::vector<std::size_t> s_dims;

  std::size_t style(std::size_t j) const { return s_dims.at(j); }
  bool has_style() const {
    for (std::size_t s : s_dims)
      if (s != 0) return true;
    return false;
  }
};

enum class Fusion { poe, moe };

inline const char* to_string(Fusion f) { return f == Fusion::poe ? "poe" : "moe"; }

/// Parameters of a multimodal VAE. Per modality j the encoder maps x_j to
/// (mu_c, logvar_c, mu_s, logvar_s); the decoder maps c ++ s_j to x_j's
/// likelihood parameters (means, or logits for categorical modalities).
template <class T>
class MultimodalVAE {
 public:
  struct LayerRef {
    std::size_t weight;  // index into parameters()
    std::size_t bias;
  };

  MultimodalVAE(std::vector<ModalitySpec> specs, LatentPartition partition, std::uint64_t seed)
      : specs_(std::move(specs)), partition_(std::move(partition)) {
    if (specs_.empty()) throw std::invalid_argument("model needs at least one modality");
    if (partition_.s_dims.empty()) partition_.s_dims.assign(specs_.size(), 0);
    if (partition_.s_dims.size() != specs_.size())
      throw std::invalid_argument("partition lists " + std::to_string(partition_.s_dims.size()) + " style dims for " +
                                  std::to_string(specs_.size()) + " modalities");
    if (partition_.c_dim == 0) throw std::invalid_argument("partition needs c_dim >= 1");
    for (const auto& s : specs_) s.validate();

    for (std::size_t j = 0; j < specs_.size(); ++j) {
      const auto& spec = specs_[j];
      const std::size_t latent = partition_.c_dim + partition_.s_dims[j];
      std::vector<std::size_t> enc{spec.element_count};
      enc.insert(enc.end(), spec.hidden.begin(), spec.hidden.end());
      enc.push_back(2 * latent);
      std::vector<std::size_t> dec{latent};
      dec.insert(dec.end(), spec.hidden.rbegin(), spec.hidden.rend());
      dec.push_back(spec.element_count);
      encoders_.push_back(add_mlp("enc" + std::to_string(j), enc));
      decoders_.push_back(add_mlp("dec" + std::to_string(j), dec));
    }
    initialize(seed);
  }

  const std::vector<ModalitySpec>& specs() const noexcept { return specs_; }
  const ModalitySpec& spec(std::size_t j) const { return specs_.at(j); }
  const LatentPartition& partition() const noexcept { return partition_; }
  std::size_t modalities() const noexcept { return specs_.size(); }

  std::vector<Tensor<T>>& parameters() noexcept { return params_; }
  const std::vector<Tensor<T>>& parameters() const noexcept { return params_; }
  const std::vector<std::string>& parameter_names() const noexcept { return names_; }
  const std::vector<LayerRef>& encoder(std::size_t j) const { return encoders_.at(j); }
  const std::vector<LayerRef>& decoder(std::size_t j) const { return decoders_.at(j); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases; tensor k
  /// draws from its own stream derived from (seed, k).
  void initialize(std::uint64_t seed) {
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Rng rng(derive_seed(seed, k));
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in_[k]));
      for (auto& v : params_[k].values()) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
    }
  }

  /// All parameters concatenated in order.
  Tensor<T> flatten() const {
    std::vector<T> flat;
    flat.reserve(parameter_count());
    for (const auto& p : params_) flat.insert(flat.end(), p.values().begin(), p.values().end());
    const std::size_t n = flat.size();
    return Tensor<T>({n}, std::move(flat));
  }
  void unflatten(const Tensor<T>& flat) {
    if (flat.size() != parameter_count()) throw ShapeError("unflatten: parameter count mismatch");
    std::size_t off = 0;
    for (auto& p : params_) {
      std::copy(flat.data() + off, flat.data() + off + p.size(), p.data());
      off += p.size();
    }
  }

  template <class U>
  MultimodalVAE<U> cast() const {
    MultimodalVAE<U> out(specs_, partition_, 0);
    for (std::size_t k = 0; k < params_.size(); ++k) out.parameters()[k] = params_[k].template cast<U>();
    return out;
  }

 private:
  std::vector<LayerRef> add_mlp(const std::string& prefix, const std::vector<std::size_t>& widths) {
    std::vector<LayerRef> layers;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      LayerRef ref{params_.size(), params_.size() + 1};
      params_.emplace_back(Shape{widths[l], widths[l + 1]});
      names_.push_back(prefix + ".w" + std::to_string(l));
      fan_in_.push_back(widths[l]);
      params_.emplace_back(Shape{1, widths[l + 1]});
      names_.push_back(prefix + ".b" + std::to_string(l));
      fan_in_.push_back(widths[l]);
      layers.push_back(ref);
    }
    return layers;
  }

  std::vector<ModalitySpec> specs_;
  LatentPartition partition_;
  std::vector<Tensor<T>> params_;
  std::vector<std::string> names_;
  std::vector<std::size_t> fan_in_;
  std::vector<std::vector<LayerRef>> encoders_, decoders_;
};

/// A model's parameters placed on a tape, as trainable variables or constants.
template <class T>
struct BoundModel {
  const MultimodalVAE<T>* model = nullptr;
  ad::Tape<T>* tape = nullptr;
  std::vector<ad::Var<T>> params;
};

template <class T>
BoundModel<T> bind(const MultimodalVAE<T>& model, ad::Tape<T>& tape, bool trainable) {
  BoundModel<T> b{&model, &tape, {}};
  for (const auto& p : model.parameters()) b.params.push_back(trainable ? tape.variable(p) : tape.constant(p));
  return b;
}

/// Binds slices of one flat parameter vector, so a single input drives every parameter.
template <class T>
BoundModel<T> bind_flat(const MultimodalVAE<T>& model, const ad::Var<T>& flat) {
  if (flat.size() != model.parameter_count()) throw ShapeError("bind_flat: parameter count mismatch");
  BoundModel<T> b{&model, flat.tape(), {}};
  auto row = ad::reshape(flat, {1, flat.size()});
  std::size_t off = 0;
  for (const auto& p : model.parameters()) {
    b.params.push_back(ad::reshape(ad::slice(row, 1, off, off + p.size()), p.shape()));
    off += p.size();
  }
  return b;
}

namespace detail {

template <class T>
ad::Var<T> run_mlp(const BoundModel<T>& m, const std::vector<typename MultimodalVAE<T>::LayerRef>& layers,
                   ad::Var<T> x) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    x = ad::matmul(x, m.params[layers[l].weight]) + ad::tile_rows(m.params[layers[l].bias], x.rows());
    if (l + 1 < layers.size()) x = ad::relu(x);
  }
  return x;
}

}  // namespace detail

/// Unimodal posterior over content and (possibly empty) style.
template <class T>
struct UnimodalPosterior {
  GaussianVar<T> content;
  std::optional<GaussianVar<T>> style;
};

template <class T>
UnimodalPosterior<T> encode(const BoundModel<T>& m, std::size_t j, const ad::Var<T>& x) {
  const auto& spec = m.model->spec(j);
  if (x.shape().size() != 2 || x.cols() != spec.element_count)
    throw ShapeError("encode: modality '" + spec.name + "' expects n x " + std::to_string(spec.element_count) +
                     ", got " + to_string(x.shape()));
  const std::size_t c = m.model->partition().c_dim, s = m.model->partition().style(j);
  auto out = detail::run_mlp(m, m.model->encoder(j), x);
  auto lv = [](const ad::Var<T>& v) { return ad::clamp(v, static_cast<T>(kMinLogVar), static_cast<T>(kMaxLogVar)); };
  UnimodalPosterior<T> post{{ad::slice(out, 1, 0, c), lv(ad::slice(out, 1, c, 2 * c))}, std::nullopt};
  if (s > 0) post.style = GaussianVar<T>{ad::slice(out, 1, 2 * c, 2 * c + s), lv(ad::slice(out, 1, 2 * c + s, 2 * c + 2 * s))};
  return post;
}

/// Raw decoder output for modality j from c ++ s_j (means, or logits).
template <class T>
ad::Var<T> decode(const BoundModel<T>& m, std::size_t j, const ad::Var<T>& latent) {
  const std::size_t want = m.model->partition().c_dim + m.model->partition().style(j);
  if (latent.shape().size() != 2 || latent.cols() != want)
    throw ShapeError("decode: modality " + std::to_string(j) + " expects latent width " + std::to_string(want));
  return detail::run_mlp(m, m.model->decoder(j), latent);
}

/// Per-row log-likelihood log p(x | decoder output), n x 1. Continuous
/// likelihoods use unit scale.
template <class T>
ad::Var<T> log_likelihood(const ModalitySpec& spec, const ad::Var<T>& out, const ad::Var<T>& x) {
  using namespace ad;
  if (out.shape() != x.shape()) throw ShapeError("log_likelihood: output and data shapes differ");
  const std::size_t n = x.rows(), e = x.cols();
  switch (spec.likelihood) {
    case Likelihood::gaussian:
      return shift(scale(sum(square(x - out), 1), T{-0.5}), static_cast<T>(-0.5 * kLogTwoPi * static_cast<double>(e)));
    case Likelihood::laplace:
      return shift(-sum(abs(x - out), 1), static_cast<T>(-std::log(2.0) * static_cast<double>(e)));
    case Likelihood::categorical: {
      const std::size_t a = spec.alphabet, rows = n * (e / a);
      auto logits = reshape(out, {rows, a});
      auto log_probs = logits - tile_cols(logsumexp(logits, 1), a);
      return sum(reshape(mul(log_probs, reshape(x, {rows, a})), {n, e}), 1);
    }
  }
  throw std::logic_error("unreachable likelihood kind");
}

/// Deterministic decoding: means for continuous modalities, one-hot argmax
/// per position for categorical ones.
template <class T>
Tensor<T> decode_output(const ModalitySpec& spec, const Tensor<T>& out) {
  if (spec.likelihood != Likelihood::categorical) return out;
  Tensor<T> hot(out.shape());
  const std::size_t a = spec.alphabet;
  for (std::size_t r = 0; r < out.size() / a; ++r) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < a; ++k)
      if (out[r * a + k] > out[r * a + best]) best = k;
    hot[r * a + best] = T{1};
  }
  return hot;
}

template <class T>
Tensor<T> normal_noise(Rng& rng, std::size_t n, std::size_t d) {
  Tensor<T> t({n, d});
  rng.fill_normal(t.values());
  return t;
}

/// One draw per row from the mixture sum_k w_k q_k: a component is chosen per
/// row by weight, then reparameterised with shared noise. Consumes n uniforms
/// followed by n x d normals; with a single non-zero weight only the normals.
template <class T>
ad::Var<T> sample_mixture(const std::vector<GaussianVar<T>>& comps, std::span<const double> weights, Rng& rng) {
  using namespace ad;
  ::mmjsd::detail::check_weights(weights, comps.size(), "sample_mixture");
  auto& tape = *comps.front().mean.tape();
  const std::size_t n = comps.front().batch(), d = comps.front().dim();
  const auto active = std::count_if(weights.begin(), weights.end(), [](double v) { return v > 0.0; });
  if (active == 1) {
    const auto k = static_cast<std::size_t>(std::find_if(weights.begin(), weights.end(), [](double v) { return v > 0.0; }) -
                                            weights.begin());
    return reparam_sample(comps[k], normal_noise<T>(rng, n, d));
  }
  std::vector<Tensor<T>> select(comps.size(), Tensor<T>({n, 1}));
  for (std::size_t r = 0; r < n; ++r) {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t k = comps.size();
    for (std::size_t i = 0; i < comps.size(); ++i) {
      if (weights[i] == 0.0) continue;
      k = i;
      acc += weights[i];
      if (u < acc) break;
    }
    select[k][r] = T{1};
  }
  const auto noise = tape.constant(normal_noise<T>(rng, n, d));
  Var<T> mean, stddev;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    if (weights[i] == 0.0) continue;
    auto mask = tile_cols(tape.constant(select[i]), d);
    auto mi = mul(mask, comps[i].mean);
    auto si = mul(mask, exp(scale(comps[i].log_var, T{0.5})));
    mean = mean.valid() ? mean + mi : mi;
    stddev = stddev.valid() ? stddev + si : si;
  }
  return mean + mul(stddev, noise);
}

/// Shared-space posterior for a subset: a Gaussian (PoE) or mixture components (MoE).
template <class T>
struct JointPosterior {
  Fusion fusion = Fusion::poe;
  GaussianVar<T> poe;
  std::vector<GaussianVar<T>> components;
  std::vector<double> weights;

  ad::Var<T> sample(Rng& rng) const {
    if (fusion == Fusion::poe) return reparam_sample(poe, normal_noise<T>(rng, poe.batch(), poe.dim()));
    return sample_mixture(components, weights, rng);
  }
};

/// Fuses the content posteriors of the masked modalities with uniform weights,
/// optionally adding N(0, I) as an extra expert (PoE only).
template <class T>
JointPosterior<T> infer_joint(const std::vector<UnimodalPosterior<T>>& posts, const std::vector<bool>& mask,
                              Fusion fusion, bool include_prior_expert) {
  if (mask.size() != posts.size()) throw std::invalid_argument("infer_joint: mask length does not match modalities");
  JointPosterior<T> jp;
  jp.fusion = fusion;
  for (std::size_t j = 0; j < posts.size(); ++j)
    if (mask[j]) jp.components.push_back(posts[j].content);
  if (jp.components.empty()) throw std::invalid_argument("infer_joint: empty modality mask");
  if (fusion == Fusion::poe && include_prior_expert) {
    const auto& c = jp.components.front();
    jp.components.push_back(standard_normal(*c.mean.tape(), c.batch(), c.dim()));
  }
  jp.weights.assign(jp.components.size(), 1.0 / static_cast<double>(jp.components.size()));
  if (fusion == Fusion::poe) jp.poe = poe_geometric_mean(jp.components, jp.weights);
  return jp;
}

/// Generated data for every modality: decoded means or one-hot argmax symbols.
template <class T>
using Generated = std::vector<Tensor<T>>;

/// Generates all modalities conditioned on the masked ones in `batch`: c from
/// the fused subset posterior, s_j from q(s_j|x_j) when x_j is available and
/// from N(0, I) otherwise.
template <class T>
Generated<T> conditional_generate(const MultimodalVAE<T>& model, const ModalityBatch<T>& batch,
                                  const std::vector<bool>& mask, Rng& rng, Fusion fusion = Fusion::poe,
                                  bool include_prior_expert = true) {
  if (mask.size() != model.modalities()) throw std::invalid_argument("conditional_generate: mask length mismatch");
  ad::Tape<T> tape;
  const auto m = bind(model, tape, false);
  const std::size_t n = batch.size();
  std::vector<UnimodalPosterior<T>> posts(model.modalities());
  for (std::size_t j = 0; j < model.modalities(); ++j)
    if (mask[j]) posts[j] = encode(m, j, tape.constant(batch.data.at(j)));
  const auto c = infer_joint(posts, mask, fusion, include_prior_expert).sample(rng);
  Generated<T> out;
  for (std::size_t j = 0; j < model.modalities(); ++j) {
    ad::Var<T> latent = c;
    if (const std::size_t s = model.partition().style(j); s > 0) {
      auto style = mask[j] ? reparam_sample(*posts[j].style, normal_noise<T>(rng, n, s))
                           : tape.constant(normal_noise<T>(rng, n, s));
      latent = ad::concat<T>({c, style}, 1);
    }
    out.push_back(decode_output(model.spec(j), decode(m, j, latent).value()));
  }
  return out;
}

/// Generates `count` samples from the prior: c and every s_j from N(0, I).
template <class T>
Generated<T> random_generate(const MultimodalVAE<T>& model, std::size_t count, Rng& rng) {
  if (count == 0) throw std::invalid_argument("random_generate: count must be >= 1");
  ad::Tape<T> tape;
  const auto m = bind(model, tape, false);
  const auto c = tape.constant(normal_noise<T>(rng, count, model.partition().c_dim));
  Generated<T> out;
  for (std::size_t j = 0; j < model.modalities(); ++j) {
    ad::Var<T> latent = c;
    if (const std::size_t s = model.partition().style(j); s > 0)
      latent = ad::concat<T>({c, tape.constant(normal_noise<T>(rng, count, s))}, 1);
    out.push_back(decode_output(model.spec(j), decode(m, j, latent).value()));
  }
  return out;
}

/// Posterior means of the shared space for a subset (PoE, no prior expert by
/// default): the representation used by the linear probe.
template <class T>
Tensor<T> shared_representation(const MultimodalVAE<T>& model, const ModalityBatch<T>& batch,
                                const std::vector<bool>& mask, bool include_prior_expert = false) {
  ad::Tape<T> tape;
  const auto m = bind(model, tape, false);
  std::vector<UnimodalPosterior<T>> posts(model.modalities());
  for (std::size_t j = 0; j < model.modalities(); ++j)
    if (mask.at(j)) posts[j] = encode(m, j, tape.constant(batch.data.at(j)));
  return infer_joint(posts, mask, Fusion::poe, include_prior_expert).poe.mean.value();
}

}  // namespace mmjsd
