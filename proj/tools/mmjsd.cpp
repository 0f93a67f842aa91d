#include "mmjsd/checkpoint.hpp"
#include "mmjsd/config.hpp"
#include "mmjsd/data.hpp"
#include "mmjsd/evalsuite.hpp"
#include "mmjsd/trainer.hpp"
#include "mmjsd/verify.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace mmjsd;

namespace {

KeyValues read_config(const std::string& path) { return path.empty() ? KeyValues{} : KeyValues::load(path); }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

int data_gen(const std::string& config, const std::string& out) {
  const auto cfg = dataset_config(read_config(config));
  const auto d = generate_dataset(cfg);
  save_dataset(out, d);
  std::cout << "samples " << d.size() << ", classes " << cfg.num_classes << ", bytes "
            << std::filesystem::file_size(out) << " -> " << out << '\n';
  return 0;
}

int train_cmd(const std::string& config, const std::string& data_path, const std::string& out,
              std::optional<std::uint64_t> seed, std::string metrics) {
  auto recipe = train_recipe(read_config(config));
  if (seed) recipe.train.seed = *seed;
  const auto data = load_dataset(data_path);
  auto model = recipe.build(data.text_length);
  const auto cfg = recipe.config_for(model.specs());
  if (metrics.empty()) metrics = out + ".metrics.csv";
  std::ofstream csv(metrics);
  if (!csv) throw std::runtime_error("cannot write metrics to '" + metrics + "'");
  write_metrics_header(csv, model.specs());
  const auto t0 = std::chrono::steady_clock::now();
  train(model, data, cfg, [&](const EpochMetrics& e) {
    write_metrics_row(csv, e);
    csv.flush();
    std::cerr << "epoch " << e.epoch << "  loss " << e.mean.total << "  shared_div " << e.mean.shared_divergence << "  ["
              << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s]\n";
  });
  save_checkpoint(out, model);
  std::cout << "checkpoint " << out << ", metrics " << metrics << '\n';
  return 0;
}

int eval_cmd(const std::string& ckpt, const std::string& data_path, const std::string& subsets,
             const std::string& metrics, std::size_t importance, std::size_t loglik_rows, std::uint64_t seed,
             const std::string& out) {
  const auto model = load_checkpoint(ckpt);
  const auto data = load_dataset(data_path);
  check_model_matches(model, data);
  EvalConfig cfg;
  cfg.subsets = parse_subsets(subsets, model.modalities());
  if (metrics != "all") cfg.metrics = split(metrics, ',');
  cfg.importance_samples = importance;
  cfg.loglik_rows = loglik_rows;
  cfg.seed = seed;
  const auto rows = evaluate(model, data, cfg);
  if (out.empty()) {
    write_eval_csv(std::cout, rows);
  } else {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write '" + out + "'");
    write_eval_csv(f, rows);
  }
  return 0;
}

int generate_cmd(const std::string& ckpt, const std::string& condition, const std::string& data_path, std::size_t count,
                 std::uint64_t seed, const std::string& out) {
  const auto model = load_checkpoint(ckpt);
  if (count == 0) throw std::invalid_argument("--count must be >= 1");
  Rng rng(seed);
  Generated<float> gen;
  std::vector<int> labels(count, -1);
  if (condition == "none") {
    gen = random_generate(model, count, rng);
  } else {
    const auto subset = parse_subsets(condition, model.modalities());
    if (subset.size() != 1) throw std::invalid_argument("--condition-on takes a single subset, e.g. A,B");
    if (data_path.empty()) throw std::invalid_argument("--condition-on " + condition + " needs --data");
    const auto data = load_dataset(data_path);
    check_model_matches(model, data);
    if (data.size() < count) throw std::invalid_argument("--count exceeds the dataset size");
    const auto batch = slice_batch<float>(data, 0, count);
    gen = conditional_generate(model, batch, subset.front(), rng);
    labels = batch.labels;
  }
  Dataset d;
  d.alphabet = model.spec(2).alphabet;
  d.text_length = model.spec(2).element_count / d.alphabet;
  d.mod_a = gen[0];
  d.mod_b = gen[1];
  d.mod_c = gen[2];
  d.labels = labels;
  save_dataset(out, d);
  std::cout << count << " samples per modality -> " << out << '\n';
  return 0;
}

int verify_cmd(const std::string& level, bool tamper, std::uint64_t seed) {
  verify::Options opt;
  opt.level = verify::parse_level(level);
  opt.tamper_poe = tamper;
  opt.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = verify::run(opt, &std::cout);
  const bool ok = verify::all_passed(results);
  std::cout << (ok ? "verify: all properties passed" : "verify: FAILED") << " ("
            << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s)\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmjsd: multimodal VAEs with Jensen-Shannon objectives on synthetic trimodal data"};
  app.require_subcommand(1);

  std::string config, out, data, ckpt, metrics_path;
  std::optional<std::uint64_t> seed;

  auto* dg = app.add_subcommand("data-gen", "generate the synthetic trimodal dataset");
  dg->add_option("--config", config, "key = value dataset config (defaults if omitted)");
  dg->add_option("--out", out, "output dataset container")->required();

  auto* tr = app.add_subcommand("train", "train a model on a dataset");
  tr->add_option("--config", config, "key = value training config (defaults if omitted)");
  tr->add_option("--data", data, "dataset container")->required();
  tr->add_option("--out", out, "output checkpoint")->required();
  tr->add_option("--seed", seed, "overrides the config seed");
  tr->add_option("--metrics", metrics_path, "per-epoch metrics CSV (default: <out>.metrics.csv)");

  std::string subsets = "all", metrics = "all";
  std::size_t importance = 64, loglik_rows = 256;
  std::uint64_t eval_seed = 0;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  ev->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  ev->add_option("--data", data, "dataset container")->required();
  ev->add_option("--subsets", subsets, "conditioning subsets, e.g. \"A;B;C;A,B;A,B,C\" or all");
  ev->add_option("--metrics", metrics, "comma list of probe,coherence,loglik,quality or all");
  ev->add_option("--importance-samples", importance, "importance samples per row for loglik");
  ev->add_option("--loglik-rows", loglik_rows, "rows scored for loglik");
  ev->add_option("--seed", eval_seed, "sampling seed");
  ev->add_option("--out", out, "CSV output (default: stdout)");

  std::string condition = "none";
  std::size_t count = 16;
  std::uint64_t gen_seed = 0;
  auto* gn = app.add_subcommand("generate", "sample from a checkpoint");
  gn->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  gn->add_option("--condition-on", condition, "subset such as A,B, or none for the prior");
  gn->add_option("--data", data, "dataset supplying the conditioning rows");
  gn->add_option("--count", count, "samples to generate");
  gn->add_option("--seed", gen_seed, "sampling seed");
  gn->add_option("--out", out, "output container (dataset format)")->required();

  std::string level = "quick";
  bool tamper = false;
  std::uint64_t verify_seed = 0;
  auto* vf = app.add_subcommand("verify", "run the property suite");
  vf->add_option("--level", level, "quick or full")->check(CLI::IsMember({"quick", "full"}));
  vf->add_flag("--tamper-poe", tamper, "swap in a wrong product-of-experts variance (mutation check)");
  vf->add_option("--seed", verify_seed, "suite seed");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*dg) return data_gen(config, out);
    if (*tr) return train_cmd(config, data, out, seed, metrics_path);
    if (*ev) return eval_cmd(ckpt, data, subsets, metrics, importance, loglik_rows, eval_seed, out);
    if (*gn) return generate_cmd(ckpt, condition, data, count, gen_seed, out);
    if (*vf) return verify_cmd(level, tamper, verify_seed);
  } catch (const NonFiniteLoss& e) {
    std::cerr << "error: training aborted: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
