#include "mmjsd/checkpoint.hpp"
#include "mmjsd/trainer.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <limits>
#include <sstream>

using namespace mmjsd;

namespace {

Dataset small_data(std::size_t n, std::uint64_t seed = 1) {
  DatasetConfig c;
  c.num_samples = n;
  c.seed = seed;
  return generate_dataset(c);
}

MultimodalVAE<float> small_model(std::size_t style = 2, std::uint64_t seed = 7) {
  return MultimodalVAE<float>(trimodal_specs(8, {32}), LatentPartition{4, {style, style, style}}, seed);
}

TrainConfig quick(std::size_t epochs = 2) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 64;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<Tensor<double>> p{Tensor<double>::vector({1.0, -2.0, 0.5})};
  const auto g = Tensor<double>::vector({0.3, -4.0, 0.0});
  Adam opt({0.1});
  opt.step(p, {&g});
  EXPECT_NEAR(p[0][0], 0.9, 1e-6);
  EXPECT_NEAR(p[0][1], -1.9, 1e-6);
  EXPECT_EQ(p[0][2], 0.5);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, MatchesReferenceRecurrence) {
  std::vector<Tensor<double>> p{Tensor<double>::vector({0.0})};
  Adam opt({0.01, 0.9, 0.999, 1e-8});
  double x = 0.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 20; ++t) {
    const double grad = 2.0 * (x - 3.0);
    const auto g = Tensor<double>::vector({grad});
    opt.step(p, {&g});
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    x -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    ASSERT_NEAR(p[0][0], x, 1e-12);
  }
}

TEST(Train, ZeroStepsLeavesParameters) {
  const auto d = small_data(100);
  auto m = small_model();
  const auto before = m.flatten();
  auto cfg = quick();
  cfg.max_steps = 0;
  EXPECT_TRUE(train(m, d, cfg).empty());
  EXPECT_EQ(m.flatten(), before);
}

TEST(Train, DeterministicCheckpointBytes) {
  const auto d = small_data(200);
  auto a = small_model(), b = small_model();
  train(a, d, quick());
  train(b, d, quick());
  EXPECT_EQ(to_container(a).serialize(), to_container(b).serialize());
  auto c = small_model();
  auto cfg = quick();
  cfg.seed = 4;
  train(c, d, cfg);
  EXPECT_NE(to_container(a).serialize(), to_container(c).serialize());
}

TEST(Train, EpochLogShape) {
  const auto d = small_data(150);
  auto m = small_model();
  std::size_t callbacks = 0;
  const auto log = train(m, d, quick(3), [&](const EpochMetrics&) { ++callbacks; });
  ASSERT_EQ(log.size(), 3u);
  EXPECT_EQ(callbacks, 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(log[e].epoch, e + 1);
    EXPECT_EQ(log[e].steps, 3u);
    EXPECT_EQ(log[e].mean.reconstruction.size(), 3u);
    EXPECT_EQ(log[e].mean.style_divergence.size(), 3u);
    EXPECT_NEAR(log[e].mean.recombined(WeightConfig::defaults(m.specs())), log[e].mean.total, 1e-3 * std::abs(log[e].mean.total));
  }
}

TEST(Train, MaxStepsStopsMidEpoch) {
  const auto d = small_data(150);
  auto m = small_model();
  auto cfg = quick(5);
  cfg.max_steps = 4;
  const auto log = train(m, d, cfg);
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log[0].steps + log[1].steps, 4u);
}

TEST(Train, LossDecreasesAcrossSeeds) {
  const auto d = small_data(600);
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto m = small_model(2, seed);
    auto cfg = quick(6);
    cfg.seed = seed;
    const auto log = train(m, d, cfg);
    improved += log.back().mean.total < log.front().mean.total;
  }
  EXPECT_GE(improved, 19);
}

TEST(Train, EveryObjectiveRuns) {
  const auto d = small_data(100);
  for (auto kind : {ObjectiveKind::elbo_joint, ObjectiveKind::moe_bound, ObjectiveKind::mmjsd, ObjectiveKind::mmjsd_factorized})
    for (auto prior : {PriorKind::geometric, PriorKind::arithmetic}) {
      auto m = small_model(kind == ObjectiveKind::mmjsd_factorized ? 2 : 0);
      auto cfg = quick(1);
      cfg.objective = kind;
      cfg.prior = prior;
      const auto log = train(m, d, cfg);
      ASSERT_EQ(log.size(), 1u);
      EXPECT_TRUE(std::isfinite(log[0].mean.total)) << to_string(kind);
    }
}

TEST(Train, NonFiniteLossNamesTerm) {
  const auto d = small_data(64);
  auto m = small_model();
  m.parameters()[m.decoder(1).back().bias][0] = std::numeric_limits<float>::quiet_NaN();
  try {
    train(m, d, quick(1));
    FAIL() << "expected NonFiniteLoss";
  } catch (const NonFiniteLoss& e) {
    EXPECT_EQ(e.term(), "reconstruction[mod_b]");
  }
}

TEST(Train, RejectsMismatchAndBadConfig) {
  const auto d = small_data(20);
  MultimodalVAE<float> wrong(trimodal_specs(9, {8}), LatentPartition{2, {0, 0, 0}}, 0);
  EXPECT_THROW(train(wrong, d, quick()), std::invalid_argument);
  MultimodalVAE<float> two({ModalitySpec{"a", 64, Likelihood::gaussian, 0, {8}}, ModalitySpec{"b", 192, Likelihood::gaussian, 0, {8}}},
                           LatentPartition{2, {0, 0}}, 0);
  EXPECT_THROW(train(two, d, quick()), std::invalid_argument);
  auto m = small_model();
  auto cfg = quick();
  cfg.epochs = 0;
  EXPECT_THROW(train(m, d, cfg), std::invalid_argument);
  cfg = quick();
  cfg.learning_rate = 0.0;
  EXPECT_THROW(train(m, d, cfg), std::invalid_argument);
}

TEST(Metrics, CsvSchema) {
  const auto d = small_data(64);
  auto m = small_model();
  std::ostringstream out;
  write_metrics_header(out, m.specs());
  for (const auto& e : train(m, d, quick(2))) write_metrics_row(out, e);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "# mmjsd-train v1");
  std::getline(in, line);
  EXPECT_EQ(line,
            "epoch,objective_total,recon_mod_a,recon_mod_b,recon_mod_c,shared_div,style_div_mod_a,style_div_mod_b,"
            "style_div_mod_c");
  int rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 8);
    ++rows;
  }
  EXPECT_EQ(rows, 2);
}

TEST(Checkpoint, RoundTrip) {
  const auto m = small_model(3, 11);
  const auto path = (std::filesystem::temp_directory_path() / "mmjsd_ckpt_test.mmjs").string();
  save_checkpoint(path, m);
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back.flatten(), m.flatten());
  EXPECT_EQ(back.partition().c_dim, 4u);
  EXPECT_EQ(back.partition().s_dims, (std::vector<std::size_t>{3, 3, 3}));
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(back.spec(j).name, m.spec(j).name);
    EXPECT_EQ(back.spec(j).hidden, m.spec(j).hidden);
    EXPECT_EQ(back.spec(j).likelihood, m.spec(j).likelihood);
    EXPECT_EQ(back.spec(j).alphabet, m.spec(j).alphabet);
  }
  EXPECT_EQ(to_container(back).serialize(), to_container(m).serialize());
  EXPECT_THROW(load_dataset(path), ContainerError);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsShapeMismatch) {
  const auto m = small_model();
  auto c = to_container(m);
  Container bad(kCheckpointMagic);
  for (const auto& e : c.entries()) {
    if (e.name == "param.enc0.b0")
      bad.add(e.name, Tensor<float>({1, 3}));
    else if (e.dtype == DType::f32)
      bad.add(e.name, e.as_f32());
    else
      bad.add(e.name, e.shape, e.as_i32());
  }
  EXPECT_THROW(model_from_container(bad), ContainerError);
}
