#pragma once

// Flat "key = value" config files. '#' starts a comment; blank lines are
// ignored. Every key must be consumed by the command reading the file, so a
// misspelt key is an error rather than a silently ignored setting.

#include "mmjsd/data.hpp"
#include "mmjsd/model.hpp"
#include "mmjsd/objectives.hpp"
#include "mmjsd/trainer.hpp"

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmjsd {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& origin = "config") {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    for (std::size_t no = 1; std::getline(in, line); ++no) {
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(no) + ": expected key = value");
      const auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(no) + ": empty key");
      if (!kv.values_.emplace(key, value).second)
        throw ConfigError(origin + ":" + std::to_string(no) + ": duplicate key '" + key + "'");
    }
    return kv;
  }

  static KeyValues load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) {
    used_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }
  double get_double(const std::string& key, double fallback) {
    return convert<double>(key, fallback, [](const std::string& s, std::size_t* pos) { return std::stod(s, pos); });
  }
  std::size_t get_size(const std::string& key, std::size_t fallback) {
    return convert<std::size_t>(key, fallback, [&](const std::string& s, std::size_t* pos) {
      if (s.find('-') != std::string::npos) throw ConfigError("'" + key + "' must be a non-negative integer");
      return static_cast<std::size_t>(std::stoull(s, pos));
    });
  }
  bool get_bool(const std::string& key, bool fallback) {
    const auto v = get_string(key, fallback ? "true" : "false");
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("'" + key + "' must be true or false, got '" + v + "'");
  }
  /// Comma-separated list; a single value is a one-element list.
  std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) {
    return get_list<std::size_t>(key, fallback, [&](const std::string& s) {
      KeyValues one;
      one.values_[key] = s;
      return one.get_size(key, 0);
    });
  }
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) {
    return get_list<double>(key, fallback, [&](const std::string& s) {
      KeyValues one;
      one.values_[key] = s;
      return one.get_double(key, 0.0);
    });
  }

  /// Throws on any key no getter asked for.
  void require_all_used(const std::string& what) const {
    std::string unknown;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
    if (!unknown.empty()) throw ConfigError("unknown " + what + " config key(s): " + unknown);
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r"), e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  }

  template <class V, class F>
  V convert(const std::string& key, V fallback, F parse) {
    used_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const V v = parse(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("'" + key + "' has invalid value '" + it->second + "'");
    }
  }

  template <class V, class F>
  std::vector<V> get_list(const std::string& key, const std::vector<V>& fallback, F one) {
    used_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<V> out;
    if (it->second == "none" || it->second.empty()) return out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(one(trim(item)));
    return out;
  }

  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

/// Keys: num_samples, num_classes, seed, noise_std_a, noise_std_b,
/// text_length, alphabet, jitter.
inline DatasetConfig dataset_config(KeyValues kv) {
  DatasetConfig c;
  c.num_samples = kv.get_size("num_samples", c.num_samples);
  c.num_classes = kv.get_size("num_classes", c.num_classes);
  c.seed = kv.get_size("seed", c.seed);
  c.noise_std_a = kv.get_double("noise_std_a", c.noise_std_a);
  c.noise_std_b = kv.get_double("noise_std_b", c.noise_std_b);
  c.text_length = kv.get_size("text_length", c.text_length);
  c.alphabet = kv.get_size("alphabet", c.alphabet);
  c.jitter = kv.get_bool("jitter", c.jitter);
  kv.require_all_used("data-gen");
  c.validate();
  return c;
}

/// Everything `train` needs besides the data: architecture, optimisation and
/// the objective weights that differ from WeightConfig::defaults.
struct TrainRecipe {
  TrainConfig train;
  std::size_t c_dim = 16;
  std::vector<std::size_t> s_dims{4, 4, 4};
  std::vector<std::size_t> hidden{256, 256};
  Likelihood image_likelihood = Likelihood::gaussian;
  std::optional<double> beta, beta_style;
  std::optional<std::vector<double>> beta_per_modality, pi;
  std::optional<std::size_t> js_samples;

  /// Parameters are initialised from the training seed.
  MultimodalVAE<float> build(std::size_t text_length) const {
    return MultimodalVAE<float>(trimodal_specs(text_length, hidden, image_likelihood), LatentPartition{c_dim, s_dims},
                                train.seed);
  }

  TrainConfig config_for(const std::vector<ModalitySpec>& specs) const {
    auto w = WeightConfig::defaults(specs);
    if (beta) w.beta = *beta;
    if (beta_style) w.beta_style = *beta_style;
    if (beta_per_modality) w.beta_per_modality = *beta_per_modality;
    if (pi) w.pi = DistributionWeights(*pi);
    if (js_samples) w.js_samples = *js_samples;
    w.validate(specs.size());
    TrainConfig t = train;
    t.weights = w;
    return t;
  }
};

/// Keys: objective, prior, fusion, epochs, batch_size, learning_rate, seed,
/// max_steps, c_dim, s_dims (one value or one per modality; default 4 for
/// mmjsd_factorized, else 0), hidden, image_likelihood, beta, beta_style,
/// beta_per_modality, pi, js_samples.
inline TrainRecipe train_recipe(KeyValues kv) {
  TrainRecipe r;
  auto& t = r.train;
  t.objective = parse_objective(kv.get_string("objective", to_string(t.objective)));
  t.prior = parse_prior(kv.get_string("prior", to_string(t.prior)));
  t.fusion = parse_fusion(kv.get_string("fusion", to_string(t.fusion)));
  t.epochs = kv.get_size("epochs", t.epochs);
  t.batch_size = kv.get_size("batch_size", t.batch_size);
  t.learning_rate = kv.get_double("learning_rate", t.learning_rate);
  t.seed = kv.get_size("seed", t.seed);
  if (kv.has("max_steps")) t.max_steps = kv.get_size("max_steps", 0);
  r.c_dim = kv.get_size("c_dim", r.c_dim);
  if (t.objective != ObjectiveKind::mmjsd_factorized) r.s_dims.assign(3, 0);
  r.s_dims = kv.get_sizes("s_dims", r.s_dims);
  if (r.s_dims.size() == 1) r.s_dims.assign(3, r.s_dims.front());
  if (r.s_dims.size() != 3) throw ConfigError("s_dims needs one value or three");
  r.hidden = kv.get_sizes("hidden", r.hidden);
  r.image_likelihood = parse_likelihood(kv.get_string("image_likelihood", to_string(r.image_likelihood)));
  if (kv.has("beta")) r.beta = kv.get_double("beta", 0.0);
  if (kv.has("beta_style")) r.beta_style = kv.get_double("beta_style", 0.0);
  if (kv.has("beta_per_modality")) r.beta_per_modality = kv.get_doubles("beta_per_modality", {});
  if (kv.has("pi")) r.pi = kv.get_doubles("pi", {});
  if (kv.has("js_samples")) r.js_samples = kv.get_size("js_samples", 1);
  kv.require_all_used("train");
  t.validate();
  r.config_for(trimodal_specs(8, r.hidden, r.image_likelihood));
  return r;
}

}  // namespace mmjsd
