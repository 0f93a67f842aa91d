#pragma once

// Mini-batch training of a MultimodalVAE with Adam on any objective.

#include "mmjsd/data.hpp"
#include "mmjsd/model.hpp"
#include "mmjsd/objectives.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmjsd {

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::string term, std::size_t epoch, std::size_t step)
      : std::runtime_error("non-finite " + term + " at epoch " + std::to_string(epoch) + ", step " + std::to_string(step)),
        term_(std::move(term)) {}
  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moments are kept in double.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  template <class T>
  void step(std::vector<Tensor<T>>& params, const std::vector<const Tensor<T>*>& grads) {
    if (grads.size() != params.size()) throw std::invalid_argument("adam: one gradient per parameter");
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& m = m_[k];
      auto& v = v_[k];
      const auto& g = *grads[k];
      if (g.size() != m.size()) throw ShapeError("adam: gradient shape changed between steps");
      for (std::size_t i = 0; i < m.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        params[k][i] -= static_cast<T>(cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon));
      }
    }
  }

  std::size_t steps() const noexcept { return t_; }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct TrainConfig {
  ObjectiveKind objective = ObjectiveKind::mmjsd_factorized;
  PriorKind prior = PriorKind::geometric;
  Fusion fusion = Fusion::poe;
  std::size_t epochs = 30;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::optional<WeightConfig> weights;     // defaults from the model's specs
  std::optional<std::size_t> max_steps;    // stop after this many updates

  void validate() const {
    if (epochs == 0) throw std::invalid_argument("train: epochs must be >= 1");
    if (batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw std::invalid_argument("train: learning rate must be > 0");
  }
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;
  ObjectiveBreakdown mean;
};

/// Throws unless the model's modalities match the dataset's layout.
template <class T>
void check_model_matches(const MultimodalVAE<T>& model, const Dataset& data) {
  if (model.modalities() != 3)
    throw std::invalid_argument("model has " + std::to_string(model.modalities()) + " modalities, dataset has 3");
  for (std::size_t j = 0; j < 3; ++j)
    if (model.spec(j).element_count != data.modality(j).cols())
      throw std::invalid_argument("modality " + std::to_string(j) + " ('" + model.spec(j).name + "') expects " +
                                  std::to_string(model.spec(j).element_count) + " elements, dataset has " +
                                  std::to_string(data.modality(j).cols()));
  if (model.spec(2).alphabet != data.alphabet) throw std::invalid_argument("text alphabet differs between model and dataset");
}

namespace detail {

inline void require_finite(const ObjectiveBreakdown& b, const std::vector<ModalitySpec>& specs, std::size_t epoch,
                           std::size_t step) {
  for (std::size_t j = 0; j < b.reconstruction.size(); ++j)
    if (!std::isfinite(b.reconstruction[j])) throw NonFiniteLoss("reconstruction[" + specs[j].name + "]", epoch, step);
  if (!std::isfinite(b.shared_divergence)) throw NonFiniteLoss("shared_divergence", epoch, step);
  for (std::size_t j = 0; j < b.style_divergence.size(); ++j)
    if (!std::isfinite(b.style_divergence[j])) throw NonFiniteLoss("style_divergence[" + specs[j].name + "]", epoch, step);
  if (!std::isfinite(b.total)) throw NonFiniteLoss("total", epoch, step);
}

inline void accumulate(ObjectiveBreakdown& acc, const ObjectiveBreakdown& b, double w) {
  acc.reconstruction.resize(b.reconstruction.size(), 0.0);
  acc.style_divergence.resize(b.style_divergence.size(), 0.0);
  for (std::size_t j = 0; j < b.reconstruction.size(); ++j) acc.reconstruction[j] += w * b.reconstruction[j];
  for (std::size_t j = 0; j < b.style_divergence.size(); ++j) acc.style_divergence[j] += w * b.style_divergence[j];
  acc.shared_divergence += w * b.shared_divergence;
  acc.total += w * b.total;
}

}  // namespace detail

/// Trains `model` in place. Batch order comes from (seed, epoch); the
/// objective's sampling stream for step t from (seed, t). Returns one entry
/// per epoch with batch-size weighted means of the breakdown.
template <class T>
std::vector<EpochMetrics> train(MultimodalVAE<T>& model, const Dataset& data, const TrainConfig& cfg,
                                const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  check_model_matches(model, data);
  const auto weights = cfg.weights.value_or(WeightConfig::defaults(model.specs()));
  weights.validate(model.modalities());

  const std::uint64_t shuffle_seed = derive_seed(cfg.seed, 0x5348);
  const std::uint64_t step_seed = derive_seed(cfg.seed, 0x5354);
  Adam opt({cfg.learning_rate});
  std::vector<EpochMetrics> log;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochMetrics em{epoch, 0, {}};
    std::size_t seen = 0;
    for (const auto& idx : epoch_batches(data.size(), cfg.batch_size, shuffle_seed, epoch - 1)) {
      if (cfg.max_steps && step >= *cfg.max_steps) break;
      const auto batch = make_batch<T>(data, idx);
      ad::Tape<T> tape;
      const auto m = bind(model, tape, true);
      Rng rng(derive_seed(step_seed, step));
      const auto obj = evaluate_objective(cfg.objective, m, batch, cfg.fusion, cfg.prior, weights, rng);
      detail::require_finite(obj.breakdown, model.specs(), epoch, step);
      const auto grads = tape.backward(obj.loss);
      std::vector<const Tensor<T>*> g;
      for (const auto& p : m.params) g.push_back(&grads[p]);
      opt.step(model.parameters(), g);
      detail::accumulate(em.mean, obj.breakdown, static_cast<double>(idx.size()));
      seen += idx.size();
      ++em.steps;
      ++step;
    }
    if (em.steps == 0) break;
    const double inv = 1.0 / static_cast<double>(seen);
    for (auto& v : em.mean.reconstruction) v *= inv;
    for (auto& v : em.mean.style_divergence) v *= inv;
    em.mean.shared_divergence *= inv;
    em.mean.total *= inv;
    log.push_back(em);
    if (on_epoch) on_epoch(log.back());
  }
  return log;
}

inline constexpr const char* kTrainCsvHeader = "# mmjsd-train v1";

inline void write_metrics_header(std::ostream& out, const std::vector<ModalitySpec>& specs) {
  out << kTrainCsvHeader << "\nepoch,objective_total";
  for (const auto& s : specs) out << ",recon_" << s.name;
  out << ",shared_div";
  for (const auto& s : specs) out << ",style_div_" << s.name;
  out << '\n';
}

inline void write_metrics_row(std::ostream& out, const EpochMetrics& e) {
  out.precision(9);
  out << e.epoch << ',' << e.mean.total;
  for (double r : e.mean.reconstruction) out << ',' << r;
  out << ',' << e.mean.shared_divergence;
  for (double s : e.mean.style_divergence) out << ',' << s;
  out << '\n';
}

}  // namespace mmjsd
