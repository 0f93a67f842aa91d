#pragma once

// Evaluation on the synthetic trimodal data: rule-based oracles for each
// modality, a linear latent probe, cross-modal coherence, importance-sampled
// log-likelihood and a Frechet distance on oracle features.

#include "mmjsd/data.hpp"
#include "mmjsd/gaussians.hpp"
#include "mmjsd/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mmjsd {

// ---------------------------------------------------------------------------
// Oracles

enum class OracleKind { glyph, color_glyph, text };

inline constexpr std::array<OracleKind, 3> kTrimodalOracles{OracleKind::glyph, OracleKind::color_glyph, OracleKind::text};

/// Channel-max projection of a 3x8x8 image, min-max normalised to [0, 1].
template <class T>
std::array<double, kGlyphPixels> color_to_gray(std::span<const T> rgb) {
  if (rgb.size() != kColorChannels * kGlyphPixels) throw ShapeError("color_to_gray: expected 192 values");
  std::array<double, kGlyphPixels> g{};
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t p = 0; p < kGlyphPixels; ++p) {
    g[p] = std::max({static_cast<double>(rgb[p]), static_cast<double>(rgb[kGlyphPixels + p]),
                     static_cast<double>(rgb[2 * kGlyphPixels + p])});
    lo = std::min(lo, g[p]);
    hi = std::max(hi, g[p]);
  }
  for (auto& v : g) v = hi - lo > 1e-12 ? (v - lo) / (hi - lo) : 0.0;
  return g;
}

/// Per-template match score: the smallest mean squared distance to template k
/// over all +-1 px shifts.
template <class T>
std::array<double, kMaxClasses> template_scores(std::span<const T> gray) {
  if (gray.size() != kGlyphPixels) throw ShapeError("template_scores: expected 64 values");
  std::array<double, kMaxClasses> best{};
  for (std::size_t k = 0; k < kMaxClasses; ++k) {
    best[k] = std::numeric_limits<double>::infinity();
    for (int dy = -kJitter; dy <= kJitter; ++dy)
      for (int dx = -kJitter; dx <= kJitter; ++dx) {
        const auto t = shifted_template(k, dx, dy);
        double d = 0.0;
        for (std::size_t p = 0; p < kGlyphPixels; ++p) {
          const double e = static_cast<double>(gray[p]) - t[p];
          d += e * e;
        }
        best[k] = std::min(best[k], d / static_cast<double>(kGlyphPixels));
      }
  }
  return best;
}

template <class T>
int classify_glyph(std::span<const T> gray) {
  const auto s = template_scores(gray);
  return static_cast<int>(std::min_element(s.begin(), s.end()) - s.begin());
}

template <class T>
int classify_color_glyph(std::span<const T> rgb) {
  const auto g = color_to_gray(rgb);
  return classify_glyph(std::span<const double>(g));
}

/// Argmax symbol per position, as text.
template <class T>
std::string decode_text(std::span<const T> onehot, std::size_t alphabet) {
  if (alphabet == 0 || onehot.size() % alphabet != 0) throw ShapeError("decode_text: size is not a multiple of the alphabet");
  std::string s;
  for (std::size_t pos = 0; pos < onehot.size() / alphabet; ++pos) {
    const auto row = onehot.subspan(pos * alphabet, alphabet);
    s.push_back(char_of(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())));
  }
  return s;
}

/// Class of the left-most class word in the decoded text, or -1.
template <class T>
int classify_text(std::span<const T> onehot, std::size_t alphabet) {
  const auto text = decode_text(onehot, alphabet);
  int label = -1;
  std::size_t first = std::string::npos;
  for (std::size_t k = 0; k < kMaxClasses; ++k) {
    const auto at = text.find(kClassWords[k]);
    if (at != std::string::npos && (first == std::string::npos || at < first)) {
      first = at;
      label = static_cast<int>(k);
    }
  }
  return label;
}

template <class T>
int classify(OracleKind kind, std::span<const T> row, std::size_t alphabet = kAlphabet) {
  switch (kind) {
    case OracleKind::glyph: return classify_glyph(row);
    case OracleKind::color_glyph: return classify_color_glyph(row);
    case OracleKind::text: return classify_text(row, alphabet);
  }
  throw std::invalid_argument("classify: unknown modality kind");
}

inline OracleKind oracle_for(std::size_t modality) {
  if (modality >= kTrimodalOracles.size()) throw std::invalid_argument("no oracle for modality " + std::to_string(modality));
  return kTrimodalOracles[modality];
}

/// Oracle feature vector: 10 template scores for images, symbol frequencies for text.
template <class T>
std::vector<double> oracle_features(OracleKind kind, std::span<const T> row, std::size_t alphabet = kAlphabet) {
  if (kind == OracleKind::text) {
    const auto text = decode_text(row, alphabet);
    std::vector<double> hist(alphabet, 0.0);
    for (char c : text) hist[symbol_of(c)] += 1.0 / static_cast<double>(text.size());
    return hist;
  }
  std::array<double, kMaxClasses> s;
  if (kind == OracleKind::color_glyph) {
    const auto g = color_to_gray(row);
    s = template_scores(std::span<const double>(g));
  } else {
    s = template_scores(row);
  }
  return {s.begin(), s.end()};
}

// ---------------------------------------------------------------------------
// Linear probe

struct ProbeConfig {
  std::size_t steps = 500;
  double learning_rate = 0.1;
};

/// Multinomial logistic regression by full-batch gradient descent on the first
/// `train_rows` rows of `latents`; returns accuracy on (eval_latents, eval_labels).
/// Features are centred and divided by one global RMS, which keeps the probe
/// equivariant under rotations of the latent space.
inline double linear_probe(const Tensor<double>& latents, const std::vector<int>& labels, std::size_t train_rows,
                           const Tensor<double>& eval_latents, const std::vector<int>& eval_labels,
                           const ProbeConfig& cfg = {}) {
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  if (train_rows == 0 || latents.rows() < train_rows || labels.size() < train_rows)
    throw std::invalid_argument("linear_probe: not enough training rows");
  if (eval_latents.cols() != latents.cols() || eval_labels.size() != eval_latents.rows())
    throw ShapeError("linear_probe: evaluation set does not match");
  const std::size_t d = latents.cols();
  int classes = 0;
  for (std::size_t i = 0; i < train_rows; ++i) classes = std::max(classes, labels[i] + 1);
  for (int l : eval_labels) classes = std::max(classes, l + 1);
  if (std::all_of(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(train_rows),
                  [&](int l) { return l == labels.front(); }))
    throw std::invalid_argument("linear_probe: training batch has a single class");

  const Eigen::Map<const Mat> all(latents.data(), static_cast<Eigen::Index>(latents.rows()), static_cast<Eigen::Index>(d));
  const Mat x_raw = all.topRows(static_cast<Eigen::Index>(train_rows));
  const Eigen::RowVectorXd mu = x_raw.colwise().mean();
  const Mat centred = x_raw.rowwise() - mu;
  const double rms = std::sqrt(centred.squaredNorm() / static_cast<double>(centred.size()));
  const double inv = rms > 1e-12 ? 1.0 / rms : 1.0;
  const Mat x = centred * inv;

  const auto n = static_cast<Eigen::Index>(train_rows);
  Mat y = Mat::Zero(n, classes);
  for (Eigen::Index i = 0; i < n; ++i) y(i, labels[static_cast<std::size_t>(i)]) = 1.0;
  Mat w = Mat::Zero(static_cast<Eigen::Index>(d), classes);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(classes);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Mat logits = (x * w).rowwise() + b;
    const Eigen::VectorXd mx = logits.rowwise().maxCoeff();
    logits = (logits.colwise() - mx).array().exp().matrix();
    const Eigen::VectorXd z = logits.rowwise().sum();
    const Mat resid = (z.asDiagonal().inverse() * logits) - y;
    w -= cfg.learning_rate * (x.transpose() * resid) / static_cast<double>(n);
    b -= cfg.learning_rate * resid.colwise().sum() / static_cast<double>(n);
  }

  const Eigen::Map<const Mat> ev(eval_latents.data(), static_cast<Eigen::Index>(eval_latents.rows()),
                                 static_cast<Eigen::Index>(d));
  const Mat scores = (((ev.rowwise() - mu) * inv) * w).rowwise() + b;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index arg;
    scores.row(i).maxCoeff(&arg);
    if (arg == eval_labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return eval_labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(eval_labels.size());
}

// ---------------------------------------------------------------------------
// Coherence and quality

struct CoherenceResult {
  std::vector<double> per_modality;  // accuracy of each modality's oracle vs the targets
  double joint = 0.0;                // fraction of rows where every modality matches
};

template <class T>
CoherenceResult coherence(const std::vector<Tensor<T>>& generated, const std::vector<int>& targets,
                          std::size_t alphabet = kAlphabet) {
  if (generated.empty()) throw std::invalid_argument("coherence: nothing generated");
  const std::size_t n = targets.size();
  CoherenceResult out;
  std::vector<bool> all(n, true);
  for (std::size_t j = 0; j < generated.size(); ++j) {
    if (generated[j].rows() != n) throw ShapeError("coherence: generated rows do not match targets");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool ok = classify(oracle_for(j), generated[j].row(i), alphabet) == targets[i];
      hits += ok;
      all[i] = all[i] && ok;
    }
    out.per_modality.push_back(n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0);
  }
  out.joint = n ? static_cast<double>(std::count(all.begin(), all.end(), true)) / static_cast<double>(n) : 0.0;
  return out;
}

/// Per-modality oracle accuracy on a single tensor of samples.
template <class T>
double oracle_accuracy(OracleKind kind, const Tensor<T>& samples, const std::vector<int>& targets,
                       std::size_t alphabet = kAlphabet) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) hits += classify(kind, samples.row(i), alphabet) == targets[i];
  return targets.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(targets.size());
}

template <class T>
GaussianMoments feature_moments(OracleKind kind, const Tensor<T>& samples, std::size_t alphabet) {
  std::vector<double> flat;
  std::size_t width = 0;
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    const auto f = oracle_features(kind, samples.row(i), alphabet);
    width = f.size();
    flat.insert(flat.end(), f.begin(), f.end());
  }
  return estimate_moments(Tensor<double>({samples.rows(), width}, std::move(flat)));
}

/// Diagonal Frechet distance between oracle-feature moments of generated and reference samples.
template <class T, class U>
double quality_frechet(const Tensor<T>& generated, const Tensor<U>& reference, OracleKind kind,
                       std::size_t alphabet = kAlphabet) {
  if (generated.rows() < 100 || reference.rows() < 100)
    throw std::invalid_argument("quality_frechet: need at least 100 samples on each side");
  return frechet_gaussian_distance(feature_moments(kind, generated, alphabet), feature_moments(kind, reference, alphabet));
}

// ---------------------------------------------------------------------------
// Importance-sampled log-likelihood

struct DiagTensors {
  Tensor<double> mean;
  Tensor<double> log_var;
};

namespace detail {

/// z = mu + sigma * eps per row; adds -log q(z) to `lw` and the prior log p(z) = log N(z; 0, I).
template <class T>
Tensor<T> draw_and_score(const DiagTensors& q, std::size_t n, std::size_t d, Rng& rng, std::vector<double>& lw) {
  const auto eps = normal_noise<double>(rng, n, d);
  Tensor<T> z({n, d});
  for (std::size_t r = 0; r < n; ++r) {
    double lq = 0.0, lp = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double lv = q.log_var(r, i), e = eps(r, i);
      const double v = q.mean(r, i) + std::exp(0.5 * lv) * e;
      z(r, i) = static_cast<T>(v);
      lq += -0.5 * (kLogTwoPi + lv + e * e);
      lp += -0.5 * (kLogTwoPi + v * v);
    }
    lw[r] += lp - lq;
  }
  return z;
}

template <class T>
Tensor<T> hcat(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out({a.rows(), a.cols() + b.cols()});
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy(a.row(r).begin(), a.row(r).end(), out.row(r).begin());
    std::copy(b.row(r).begin(), b.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

}  // namespace detail

struct LoglikEstimate {
  double mean = 0.0;             // batch mean of the per-row estimates
  std::vector<double> per_row;
};

/// log p(X) ~ logsumexp_s[log p(X|z_s) + log p(z_s) - log q(z_s|X_K)] - log S.
/// Content is proposed from the PoE of the masked modalities (optionally with
/// the prior expert); style s_j from q(s_j|x_j) when x_j is masked in, else
/// from N(0, I). Every modality of X is scored.
template <class T>
LoglikEstimate loglik_importance(const MultimodalVAE<T>& model, const ModalityBatch<T>& batch,
                                 const std::vector<bool>& mask, std::size_t samples, Rng& rng,
                                 bool include_prior_expert = true) {
  if (samples == 0) throw std::invalid_argument("loglik_importance: need at least one importance sample");
  if (mask.size() != model.modalities() || std::none_of(mask.begin(), mask.end(), [](bool b) { return b; }))
    throw std::invalid_argument("loglik_importance: mask must select at least one modality");
  const std::size_t n = batch.size(), M = model.modalities(), c = model.partition().c_dim;

  // Proposal parameters, computed once.
  std::vector<DiagTensors> style(M);
  DiagTensors content;
  {
    ad::Tape<T> tape;
    const auto m = bind(model, tape, false);
    std::vector<UnimodalPosterior<T>> posts(M);
    for (std::size_t j = 0; j < M; ++j)
      if (mask[j]) posts[j] = encode(m, j, tape.constant(batch.data.at(j)));
    const auto q = infer_joint(posts, mask, Fusion::poe, include_prior_expert).poe;
    content = {q.mean.value().template cast<double>(), q.log_var.value().template cast<double>()};
    for (std::size_t j = 0; j < M; ++j)
      if (mask[j] && posts[j].style)
        style[j] = {posts[j].style->mean.value().template cast<double>(), posts[j].style->log_var.value().template cast<double>()};
  }

  Tensor<double> logw({n, samples});
  for (std::size_t s = 0; s < samples; ++s) {
    ad::Tape<T> tape;
    const auto m = bind(model, tape, false);
    std::vector<double> lw(n, 0.0);
    const auto zc = detail::draw_and_score<T>(content, n, c, rng, lw);
    for (std::size_t j = 0; j < M; ++j) {
      Tensor<T> latent = zc;
      if (const std::size_t sd = model.partition().style(j); sd > 0) {
        Tensor<T> zs;
        if (mask[j])
          zs = detail::draw_and_score<T>(style[j], n, sd, rng, lw);
        else
          zs = normal_noise<T>(rng, n, sd);  // prior proposal: log p - log q cancels
        latent = detail::hcat(zc, zs);
      }
      const auto out = decode(m, j, tape.constant(latent));
      const auto ll = log_likelihood(model.spec(j), out, tape.constant(batch.data.at(j))).value();
      for (std::size_t r = 0; r < n; ++r) lw[r] += static_cast<double>(ll[r]);
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (!std::isfinite(lw[r]))
        throw DomainError("loglik_importance: non-finite importance weight at row " + std::to_string(r) + ", sample " +
                          std::to_string(s));
      logw(r, s) = lw[r];
    }
  }

  LoglikEstimate est;
  for (std::size_t r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < samples; ++s) mx = std::max(mx, logw(r, s));
    double acc = 0.0;
    for (std::size_t s = 0; s < samples; ++s) acc += std::exp(logw(r, s) - mx);
    est.per_row.push_back(mx + std::log(acc) - std::log(static_cast<double>(samples)));
    est.mean += est.per_row.back() / static_cast<double>(n);
  }
  return est;
}

// ---------------------------------------------------------------------------
// Subset protocol

using Subset = std::vector<bool>;

/// Letter name of a subset, e.g. "A,C".
inline std::string subset_name(const Subset& s) {
  std::string out;
  for (std::size_t j = 0; j < s.size(); ++j)
    if (s[j]) {
      if (!out.empty()) out += ',';
      out += static_cast<char>('A' + j);
    }
  return out;
}

/// Parses "A;B;A,B" (letters name modalities in order) or "all" for every
/// non-empty subset, ordered by size then lexicographically.
inline std::vector<Subset> parse_subsets(const std::string& text, std::size_t modalities) {
  std::vector<Subset> out;
  if (text == "all") {
    for (std::size_t size = 1; size <= modalities; ++size)
      for (std::size_t bits = 1; bits < (std::size_t{1} << modalities); ++bits) {
        Subset s(modalities, false);
        std::size_t count = 0;
        for (std::size_t j = 0; j < modalities; ++j) count += (s[j] = (bits >> j) & 1u);
        if (count == size) out.push_back(s);
      }
    std::stable_sort(out.begin(), out.end(), [](const Subset& a, const Subset& b) {
      const auto ca = std::count(a.begin(), a.end(), true), cb = std::count(b.begin(), b.end(), true);
      return ca != cb ? ca < cb : subset_name(a) < subset_name(b);
    });
    return out;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto stop = std::min(text.find(';', start), text.size());
    const auto item = text.substr(start, stop - start);
    Subset s(modalities, false);
    bool any = false;
    std::size_t at = 0;
    while (at <= item.size()) {
      const auto comma = std::min(item.find(',', at), item.size());
      const auto name = item.substr(at, comma - at);
      if (name.size() != 1 || name[0] < 'A' || static_cast<std::size_t>(name[0] - 'A') >= modalities)
        throw std::invalid_argument("unknown subset '" + item + "'");
      s[static_cast<std::size_t>(name[0] - 'A')] = true;
      any = true;
      at = comma + 1;
    }
    if (!any) throw std::invalid_argument("empty subset in '" + text + "'");
    out.push_back(s);
    start = stop + 1;
  }
  return out;
}

inline const std::array<std::string_view, 4> kEvalMetrics{"probe", "coherence", "loglik", "quality"};

struct EvalConfig {
  std::vector<Subset> subsets;
  std::vector<std::string> metrics{kEvalMetrics.begin(), kEvalMetrics.end()};
  std::size_t probe_train_rows = 256;
  std::size_t importance_samples = 64;
  std::size_t loglik_rows = 256;
  std::size_t chunk = 512;
  std::uint64_t seed = 0;

  void validate(std::size_t modalities) const {
    for (const auto& m : metrics)
      if (std::find(kEvalMetrics.begin(), kEvalMetrics.end(), m) == kEvalMetrics.end())
        throw std::invalid_argument("unknown metric '" + m + "'");
    for (const auto& s : subsets)
      if (s.size() != modalities || std::none_of(s.begin(), s.end(), [](bool b) { return b; }))
        throw std::invalid_argument("subset does not match the model's modalities");
    if (importance_samples == 0 || chunk == 0) throw std::invalid_argument("eval: sample counts must be >= 1");
  }
};

struct EvalRow {
  std::string subset;
  std::string metric;
  std::string target;  // modality name, "joint" or "latent"
  double value = 0.0;
};

inline constexpr const char* kEvalCsvHeader = "# mmjsd-eval v1";

inline void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows) {
  out << kEvalCsvHeader << "\nsubset,metric,target,value\n";
  out.precision(9);
  for (const auto& r : rows) out << '"' << r.subset << "\"," << r.metric << ',' << r.target << ',' << r.value << '\n';
}

/// Data generated by conditioning on `subset`, for every dataset row, in chunks.
template <class T>
Generated<T> generate_conditioned(const MultimodalVAE<T>& model, const Dataset& data, const Subset& subset,
                                  std::uint64_t seed, std::size_t chunk = 512) {
  Generated<T> out(model.modalities());
  std::vector<std::vector<T>> flat(model.modalities());
  for (std::size_t b = 0, k = 0; b < data.size(); b += chunk, ++k) {
    Rng rng(derive_seed(seed, k));
    const auto g = conditional_generate(model, slice_batch<T>(data, b, b + chunk), subset, rng);
    for (std::size_t j = 0; j < g.size(); ++j) flat[j].insert(flat[j].end(), g[j].values().begin(), g[j].values().end());
  }
  for (std::size_t j = 0; j < out.size(); ++j)
    out[j] = Tensor<T>({data.size(), model.spec(j).element_count}, std::move(flat[j]));
  return out;
}

template <class T>
Tensor<double> representations(const MultimodalVAE<T>& model, const Dataset& data, const Subset& subset,
                               std::size_t chunk = 512) {
  std::vector<double> flat;
  for (std::size_t b = 0; b < data.size(); b += chunk) {
    const auto z = shared_representation(model, slice_batch<T>(data, b, b + chunk), subset);
    flat.insert(flat.end(), z.values().begin(), z.values().end());
  }
  return Tensor<double>({data.size(), model.partition().c_dim}, std::move(flat));
}

/// Runs the evaluation protocol on `data`: for each subset K, the probe on the
/// shared representation of K (trained on the first rows, scored on the
/// rest), coherence and Frechet quality of every modality outside K generated
/// from K, and the importance-sampled joint log-likelihood under q(z|X_K).
template <class T>
std::vector<EvalRow> evaluate(const MultimodalVAE<T>& model, const Dataset& data, const EvalConfig& cfg) {
  const std::size_t M = model.modalities();
  cfg.validate(M);
  if (M != 3) throw std::invalid_argument("evaluate: the protocol expects the trimodal layout");
  auto wants = [&](std::string_view m) { return std::find(cfg.metrics.begin(), cfg.metrics.end(), m) != cfg.metrics.end(); };
  std::vector<EvalRow> rows;
  for (std::size_t si = 0; si < cfg.subsets.size(); ++si) {
    const auto& subset = cfg.subsets[si];
    const auto name = subset_name(subset);
    const std::uint64_t stream = derive_seed(cfg.seed, si);

    if (wants("probe")) {
      if (data.size() <= cfg.probe_train_rows) throw std::invalid_argument("evaluate: probe needs more rows than probe_train_rows");
      const auto z = representations(model, data, subset, cfg.chunk);
      const auto held = take_rows(z, cfg.probe_train_rows, data.size());
      const std::vector<int> held_labels(data.labels.begin() + static_cast<std::ptrdiff_t>(cfg.probe_train_rows), data.labels.end());
      rows.push_back({name, "probe", "latent", linear_probe(z, data.labels, cfg.probe_train_rows, held, held_labels)});
    }

    if (wants("coherence") || wants("quality")) {
      const auto gen = generate_conditioned(model, data, subset, derive_seed(stream, 1), cfg.chunk);
      for (std::size_t j = 0; j < M; ++j) {
        if (subset[j]) continue;
        if (wants("coherence"))
          rows.push_back({name, "coherence", model.spec(j).name, oracle_accuracy(oracle_for(j), gen[j], data.labels, data.alphabet)});
        if (wants("quality"))
          rows.push_back({name, "quality", model.spec(j).name, quality_frechet(gen[j], data.modality(j), oracle_for(j), data.alphabet)});
      }
    }

    if (wants("loglik")) {
      Rng rng(derive_seed(stream, 2));
      const std::size_t n = std::min(cfg.loglik_rows, data.size());
      double total = 0.0;
      for (std::size_t b = 0; b < n; b += cfg.chunk) {
        const auto batch = slice_batch<T>(data, b, std::min(n, b + cfg.chunk));
        total += loglik_importance(model, batch, subset, cfg.importance_samples, rng).mean * static_cast<double>(batch.size());
      }
      rows.push_back({name, "loglik", "joint", total / static_cast<double>(n)});
    }
  }
  return rows;
}

}  // namespace mmjsd
