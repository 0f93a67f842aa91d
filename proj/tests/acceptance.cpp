// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance <path to the mmjsd CLI> [scratch dir]

#include "mmjsd/checkpoint.hpp"
#include "mmjsd/config.hpp"
#include "mmjsd/evalsuite.hpp"
#include "mmjsd/trainer.hpp"
#include "mmjsd/verify.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

using namespace mmjsd;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kKlPairs = 1000, kKlSamples = 1000000;
constexpr double kOracleSeconds = 60.0;
constexpr std::size_t kConfigs = 200;
constexpr double kGradTol = 1e-4;  // enforced inside objective_gradients
constexpr double kLoglikTol = 0.05;  // enforced inside loglik_toy
constexpr std::size_t kLoglikSamples = 10000;

constexpr std::size_t kTrainSamples = 10000, kEvalSamples = 5000;
constexpr std::uint64_t kEvalDataSeed = 1;
constexpr std::array<std::uint64_t, 3> kSeeds{0, 1, 2};
constexpr double kProbeSlack = 0.02, kProbeFloor = 0.85;
constexpr double kCoherenceFloor = 0.80, kCoherenceSlack = 0.02;
constexpr double kTrainSecondsPerSeed = 600.0;
constexpr std::size_t kQualityWins = 2;

constexpr double kQuickSeconds = 120.0, kFullSeconds = 900.0;

int failures = 0;

void report(int id, const std::string& name, bool ok, std::string detail) {
  failures += !ok;
  if (!detail.empty() && detail.front() == ' ') detail.erase(0, 1);
  std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << id << "  " << name << "  " << detail << std::endl;
}

std::string fmt(double v) { return verify::detail::fmt(v); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void property(int id, const verify::PropertyResult& r, double max_seconds = 0.0) {
  const bool in_time = max_seconds <= 0.0 || r.seconds < max_seconds;
  report(id, r.name, r.passed && in_time, r.detail + ", " + fmt(r.seconds) + " s");
}

struct RunResult {
  std::map<std::string, double> value;  // "subset|metric|target"
  double train_seconds = 0.0;
  double at(const std::string& subset, const std::string& metric, const std::string& target) const {
    return value.at(subset + "|" + metric + "|" + target);
  }
};

RunResult train_and_evaluate(const Dataset& train_data, const Dataset& eval_data, std::uint64_t seed, bool style) {
  auto kv = KeyValues::parse(style ? "" : "s_dims = 0\nc_dim = 20\n");
  auto recipe = train_recipe(kv);
  recipe.train.seed = seed;
  auto model = recipe.build(train_data.text_length);
  RunResult out;
  const auto t0 = std::chrono::steady_clock::now();
  train(model, train_data, recipe.config_for(model.specs()));
  out.train_seconds = seconds_since(t0);
  EvalConfig cfg;
  cfg.subsets = parse_subsets("all", 3);
  cfg.metrics = {"probe", "coherence", "quality"};
  cfg.seed = seed;
  for (const auto& r : evaluate(model, eval_data, cfg)) out.value[r.subset + "|" + r.metric + "|" + r.target] = r.value;
  return out;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <mmjsd cli> [scratch dir]\n";
    return 2;
  }
  const std::string cli = argv[1];
  const fs::path scratch = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "mmjsd_acceptance";
  fs::create_directories(scratch);
  std::cout << std::unitbuf;

  // 1-7: oracles
  property(1, verify::kl_closed_form(kKlPairs, kKlSamples, 101), kOracleSeconds);
  property(2, verify::poe_grid(kConfigs, 102), kOracleSeconds);
  property(3, verify::jensen_bound(kConfigs, 100000, 103));
  const auto chain = verify::elbo_chain(kConfigs, 20000, 104);
  property(4, chain[0]);
  std::cout << "INFO  criterion 4  " << chain[1].name << "  " << chain[1].detail << '\n';
  property(5, verify::worked_js(1000000, 105));
  static_assert(kGradTol == 1e-4);
  property(6, verify::objective_gradients(106));
  static_assert(kLoglikTol == 0.05);
  property(7, verify::loglik_toy(50, kLoglikSamples, 107));

  // 8-10: trends on the default trimodal recipe
  DatasetConfig dc;
  dc.num_samples = kTrainSamples;
  const auto train_data = generate_dataset(dc);
  dc.num_samples = kEvalSamples;
  dc.seed = kEvalDataSeed;
  const auto eval_data = generate_dataset(dc);

  const std::vector<std::string> single{"A", "B", "C"}, pair_without{"B,C", "A,C", "A,B"};
  bool probe_ok = true, coherence_ok = true;
  std::size_t quality_wins = 0;
  std::string probe_detail, coherence_detail, quality_detail;
  for (const auto seed : kSeeds) {
    const auto s4 = train_and_evaluate(train_data, eval_data, seed, true);
    const auto s0 = train_and_evaluate(train_data, eval_data, seed, false);

    double best_uni = 0.0, worst_uni = 1.0;
    for (const auto& k : single) {
      best_uni = std::max(best_uni, s4.at(k, "probe", "latent"));
      worst_uni = std::min(worst_uni, s4.at(k, "probe", "latent"));
    }
    const double joint = s4.at("A,B,C", "probe", "latent");
    const bool p_ok = joint >= best_uni - kProbeSlack && worst_uni >= kProbeFloor && s4.train_seconds < kTrainSecondsPerSeed;
    probe_ok = probe_ok && p_ok;
    probe_detail += " seed " + std::to_string(seed) + ": joint " + fmt(joint) + " uni [" + fmt(s4.at("A", "probe", "latent")) +
                    " " + fmt(s4.at("B", "probe", "latent")) + " " + fmt(s4.at("C", "probe", "latent")) + "] " +
                    fmt(s4.train_seconds) + " s;";

    double two_mean = 0.0, one_mean = 0.0, two_min = 1.0;
    for (std::size_t j = 0; j < 3; ++j) {
      const auto& target = kModalityNames[j];
      const double two = s4.at(pair_without[j], "coherence", std::string(target));
      double one = 0.0;
      for (std::size_t k = 0; k < 3; ++k)
        if (k != j) one += 0.5 * s4.at(single[k], "coherence", std::string(target));
      two_mean += two / 3.0;
      one_mean += one / 3.0;
      two_min = std::min(two_min, two);
    }
    coherence_ok = coherence_ok && two_min >= kCoherenceFloor && two_mean >= one_mean - kCoherenceSlack;
    coherence_detail += " seed " + std::to_string(seed) + ": two-cond min " + fmt(two_min) + " mean " + fmt(two_mean) +
                        " vs one-cond " + fmt(one_mean) + ";";

    const double q4 = s4.at("A,C", "quality", "mod_b"), q0 = s0.at("A,C", "quality", "mod_b");
    quality_wins += q4 < q0;
    quality_detail += " seed " + std::to_string(seed) + ": s=4 " + fmt(q4) + " vs s=0 " + fmt(q0) + ";";
  }
  report(8, "probe_information_gain", probe_ok, probe_detail);
  report(9, "conditional_coherence", coherence_ok, coherence_detail);
  report(10, "style_subspace_quality", quality_wins >= kQualityWins,
         std::to_string(quality_wins) + "/3 seeds better with style;" + quality_detail);

  // 11: determinism through the CLI
  {
    const auto cfg = scratch / "small.cfg";
    std::ofstream(cfg) << "num_samples = 1000\nseed = 5\n";
    const auto tcfg = scratch / "train.cfg";
    std::ofstream(tcfg) << "epochs = 2\n";
    const auto d1 = scratch / "d1.mmds", d2 = scratch / "d2.mmds", c1 = scratch / "c1.ckpt", c2 = scratch / "c2.ckpt";
    bool ok = run(cli + " data-gen --config " + cfg.string() + " --out " + d1.string()) == 0 &&
              run(cli + " data-gen --config " + cfg.string() + " --out " + d2.string()) == 0;
    const bool data_same = ok && read_bytes(d1) == read_bytes(d2);
    ok = ok && run(cli + " train --config " + tcfg.string() + " --data " + d1.string() + " --out " + c1.string() + " --seed 9") == 0 &&
         run(cli + " train --config " + tcfg.string() + " --data " + d2.string() + " --out " + c2.string() + " --seed 9") == 0;
    const bool ckpt_same = ok && read_bytes(c1) == read_bytes(c2) && !read_bytes(c1).empty();
    report(11, "determinism", data_same && ckpt_same,
           std::string("datasets ") + (data_same ? "identical" : "differ") + ", checkpoints " + (ckpt_same ? "identical" : "differ"));
  }

  // 12: verify runtimes
  {
    auto t0 = std::chrono::steady_clock::now();
    const int quick_rc = run(cli + " verify --level quick");
    const double quick_s = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    const int full_rc = run(cli + " verify --level full");
    const double full_s = seconds_since(t0);
    report(12, "verify_runtime", quick_rc == 0 && quick_s < kQuickSeconds && (full_rc == 0 || full_rc == 1) && full_s < kFullSeconds,
           "quick exit " + std::to_string(quick_rc) + " in " + fmt(quick_s) + " s, full exit " + std::to_string(full_rc) + " in " +
               fmt(full_s) + " s");
  }

  std::cout << (failures == 0 ? "acceptance: all criteria passed" : "acceptance: " + std::to_string(failures) + " criteria failed")
            << '\n';
  return failures == 0 ? 0 : 1;
}
