#include "mmjsd/model.hpp"

#include "toy.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace mmjsd {
namespace {

MultimodalVAE<double> toy_model(std::size_t c = 4, std::vector<std::size_t> s = {}, std::uint64_t seed = 1) {
  return MultimodalVAE<double>(toy::specs(), LatentPartition{c, std::move(s)}, seed);
}

bool all_finite(const Tensor<double>& t) {
  for (double v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

TEST(ModalitySpec, Validation) {
  EXPECT_THROW((ModalitySpec{"a", 0}.validate()), std::invalid_argument);
  EXPECT_THROW((ModalitySpec{"a", 6, Likelihood::categorical, 1}.validate()), std::invalid_argument);
  EXPECT_THROW((ModalitySpec{"a", 7, Likelihood::categorical, 3}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((ModalitySpec{"a", 6, Likelihood::categorical, 3}.validate()));
  EXPECT_EQ((ModalitySpec{"a", 6, Likelihood::categorical, 3}.positions()), 2u);
}

TEST(Model, ConstructionErrors) {
  EXPECT_THROW(MultimodalVAE<double>({}, LatentPartition{4, {}}, 0), std::invalid_argument);
  EXPECT_THROW(MultimodalVAE<double>(toy::specs(), LatentPartition{0, {}}, 0), std::invalid_argument);
  EXPECT_THROW(MultimodalVAE<double>(toy::specs(), LatentPartition{4, {1}}, 0), std::invalid_argument);
}

TEST(Model, InitializationIsSeededAndBounded) {
  const auto a = toy_model(4, {}, 7), b = toy_model(4, {}, 7), c = toy_model(4, {}, 8);
  EXPECT_EQ(a.flatten(), b.flatten());
  EXPECT_NE(a.flatten(), c.flatten());
  for (std::size_t j = 0; j < a.modalities(); ++j) {
    const auto& first = a.encoder(j).front();
    const double bound = 1.0 / std::sqrt(static_cast<double>(a.spec(j).element_count));
    for (double v : a.parameters()[first.weight].values()) EXPECT_LE(std::abs(v), bound);
  }
}

TEST(Model, FlattenRoundTrip) {
  auto m = toy_model();
  auto flat = m.flatten();
  for (auto& v : flat.values()) v += 1.0;
  m.unflatten(flat);
  EXPECT_EQ(m.flatten(), flat);
  EXPECT_THROW(m.unflatten(Tensor<double>({3})), ShapeError);
}

TEST(Encode, OutputDimensionsFollowPartition) {
  const auto model = toy_model(3, {2, 0});
  const auto batch = toy::batch<double>(model.specs(), 5, 1);
  ad::Tape<double> tape;
  const auto m = bind(model, tape, false);
  const auto p0 = encode(m, 0, tape.constant(batch.data[0]));
  const auto p1 = encode(m, 1, tape.constant(batch.data[1]));
  EXPECT_EQ(p0.content.mean.shape(), (Shape{5, 3}));
  EXPECT_EQ(p0.content.log_var.shape(), (Shape{5, 3}));
  ASSERT_TRUE(p0.style.has_value());
  EXPECT_EQ(p0.style->mean.shape(), (Shape{5, 2}));
  EXPECT_FALSE(p1.style.has_value());
  EXPECT_TRUE(all_finite(p0.content.mean.value()));
  EXPECT_TRUE(all_finite(p0.content.log_var.value()));
  EXPECT_THROW(encode(m, 0, tape.constant(batch.data[1])), ShapeError);
}

TEST(Encode, IdenticalInputsGiveIdenticalPosteriors) {
  const auto model = toy_model();
  auto batch = toy::batch<double>(model.specs(), 1, 2);
  Tensor<double> twice({2, 3});
  for (std::size_t i = 0; i < 3; ++i) twice(0, i) = twice(1, i) = batch.data[0](0, i);
  ad::Tape<double> tape;
  const auto q = encode(bind(model, tape, false), 0, tape.constant(twice));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(q.content.mean.value()(0, i), q.content.mean.value()(1, i));
    EXPECT_EQ(q.content.log_var.value()(0, i), q.content.log_var.value()(1, i));
  }
}

TEST(Encode, LogVarIsClamped) {
  auto model = toy_model(2);
  const auto& last = model.encoder(0).back();
  model.parameters()[last.weight].fill(0.0);
  auto& b = model.parameters()[last.bias];
  b[2] = 50.0;
  b[3] = -50.0;
  ad::Tape<double> tape;
  const auto q = encode(bind(model, tape, false), 0, tape.constant(Tensor<double>({1, 3})));
  EXPECT_EQ(q.content.log_var.value()[0], kMaxLogVar);
  EXPECT_EQ(q.content.log_var.value()[1], kMinLogVar);
}

TEST(Decode, WidthAndErrors) {
  const auto model = toy_model(3, {2, 1});
  ad::Tape<double> tape;
  const auto m = bind(model, tape, false);
  EXPECT_EQ(decode(m, 0, tape.constant(Tensor<double>({4, 5}))).shape(), (Shape{4, 3}));
  EXPECT_EQ(decode(m, 1, tape.constant(Tensor<double>({4, 4}))).shape(), (Shape{4, 6}));
  EXPECT_THROW(decode(m, 0, tape.constant(Tensor<double>({4, 3}))), ShapeError);
}

TEST(LogLikelihood, MatchesHandValues) {
  ad::Tape<double> t;
  const auto x = t.constant(Tensor<double>::matrix(1, 2, {1.0, -1.0}));
  const auto mu = t.constant(Tensor<double>::matrix(1, 2, {0.0, 0.5}));
  const double g = -std::log(2 * M_PI) - 0.5 * (1.0 + 2.25);
  EXPECT_NEAR(log_likelihood(ModalitySpec{"g", 2, Likelihood::gaussian}, mu, x).item(), g, 1e-12);
  EXPECT_NEAR(log_likelihood(ModalitySpec{"l", 2, Likelihood::laplace}, mu, x).item(), -2 * std::log(2.0) - 2.5, 1e-12);

  // Two positions over {a, b, c}: symbols b then a.
  const auto onehot = t.constant(Tensor<double>::matrix(1, 6, {0, 1, 0, 1, 0, 0}));
  const auto logits = t.constant(Tensor<double>::matrix(1, 6, {0, 1, 2, 3, 0, 0}));
  const double lp = (1 - std::log(1 + std::exp(1.0) + std::exp(2.0))) + (3 - std::log(std::exp(3.0) + 2));
  EXPECT_NEAR(log_likelihood(ModalitySpec{"c", 6, Likelihood::categorical, 3}, logits, onehot).item(), lp, 1e-12);
}

TEST(DecodeOutput, CategoricalIsOneHotArgmax) {
  const ModalitySpec spec{"c", 6, Likelihood::categorical, 3};
  const auto hot = decode_output(spec, Tensor<double>::matrix(1, 6, {0, 5, 1, 2, 0, 2}));
  EXPECT_EQ(hot, Tensor<double>::matrix(1, 6, {0, 1, 0, 1, 0, 0}));
  const auto cont = Tensor<double>::matrix(1, 2, {0.3, 7});
  EXPECT_EQ(decode_output(ModalitySpec{"g", 2}, cont), cont);
}

GaussianVar<double> constant_gaussian(ad::Tape<double>& t, std::vector<double> mu, std::vector<double> lv) {
  const std::size_t d = mu.size();
  return {t.constant(Tensor<double>({1, d}, std::move(mu))), t.constant(Tensor<double>({1, d}, std::move(lv)))};
}

TEST(InferJoint, SingleModalityWithoutPriorIsThatPosterior) {
  ad::Tape<double> t;
  std::vector<UnimodalPosterior<double>> posts{{constant_gaussian(t, {0.3, -1}, {0.2, -0.4}), {}},
                                               {constant_gaussian(t, {5, 5}, {1, 1}), {}}};
  const auto jp = infer_joint(posts, {true, false}, Fusion::poe, false);
  EXPECT_EQ(jp.poe.mean.value(), posts[0].content.mean.value());
  EXPECT_EQ(jp.poe.log_var.value(), posts[0].content.log_var.value());
}

TEST(InferJoint, EqualVariancesAverageTheMeans) {
  ad::Tape<double> t;
  std::vector<UnimodalPosterior<double>> posts{{constant_gaussian(t, {1, 2}, {0.5, 0.5}), {}},
                                               {constant_gaussian(t, {3, -2}, {0.5, 0.5}), {}}};
  const auto jp = infer_joint(posts, {true, true}, Fusion::poe, false);
  EXPECT_NEAR(jp.poe.mean.value()[0], 2.0, 1e-12);
  EXPECT_NEAR(jp.poe.mean.value()[1], 0.0, 1e-12);
  // Uniform weights keep the precision at that of a single expert.
  EXPECT_NEAR(jp.poe.log_var.value()[0], 0.5, 1e-12);

  const auto with_prior = infer_joint(posts, {true, true}, Fusion::poe, true);
  const double prec = (2 * std::exp(-0.5) + 1.0) / 3.0;
  EXPECT_NEAR(with_prior.poe.log_var.value()[0], -std::log(prec), 1e-12);
  EXPECT_NEAR(with_prior.poe.mean.value()[0], (std::exp(-0.5) * 4.0 / 3.0) / prec, 1e-12);
}

TEST(InferJoint, PoeIsOrderInvariant) {
  ad::Tape<double> t;
  Rng rng(3);
  std::vector<UnimodalPosterior<double>> posts;
  for (int j = 0; j < 3; ++j) posts.push_back({constant_gaussian(t, {rng.normal(), rng.normal()}, {rng.normal(), rng.normal()}), {}});
  const auto a = infer_joint(posts, {true, true, true}, Fusion::poe, true);
  std::swap(posts[0], posts[2]);
  const auto b = infer_joint(posts, {true, true, true}, Fusion::poe, true);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(a.poe.mean.value()[i], b.poe.mean.value()[i], 1e-12);
    EXPECT_NEAR(a.poe.log_var.value()[i], b.poe.log_var.value()[i], 1e-12);
  }
}

TEST(InferJoint, MoeIsOrderInvariantInDistribution) {
  const std::size_t n = 40'000;
  auto moments = [&](bool swapped, std::uint64_t seed) {
    ad::Tape<double> t;
    auto rep = [&](double mu, double lv) {
      return GaussianVar<double>{t.constant(Tensor<double>({n, 1}, mu)), t.constant(Tensor<double>({n, 1}, lv))};
    };
    std::vector<UnimodalPosterior<double>> posts{{rep(-2, 0), {}}, {rep(3, -1), {}}};
    if (swapped) std::swap(posts[0], posts[1]);
    Rng rng(seed);
    const auto z = infer_joint(posts, {true, true}, Fusion::moe, false).sample(rng).value();
    RunningStats s;
    for (double v : z.values()) s.push(v);
    return std::pair{s.mean(), s.variance()};
  };
  const auto [m1, v1] = moments(false, 1);
  const auto [m2, v2] = moments(true, 2);
  EXPECT_NEAR(m1, 0.5, 0.06);
  EXPECT_NEAR(m1, m2, 0.08);
  EXPECT_NEAR(v1, v2, 0.4);
}

TEST(InferJoint, EmptyMaskThrows) {
  ad::Tape<double> t;
  std::vector<UnimodalPosterior<double>> posts{{constant_gaussian(t, {0}, {0}), {}}};
  EXPECT_THROW(infer_joint(posts, {false}, Fusion::poe, false), std::invalid_argument);
  EXPECT_THROW(infer_joint(posts, {true, true}, Fusion::poe, false), std::invalid_argument);
}

TEST(SampleMixture, DegenerateWeightUsesOnlyThatComponent) {
  ad::Tape<double> t;
  std::vector<GaussianVar<double>> comps{constant_gaussian(t, {10}, {-20}), constant_gaussian(t, {-10}, {-20})};
  Rng rng(4);
  EXPECT_NEAR(sample_mixture(comps, std::vector<double>{1.0, 0.0}, rng).item(), 10.0, 1e-3);
  EXPECT_NEAR(sample_mixture(comps, std::vector<double>{0.0, 1.0}, rng).item(), -10.0, 1e-3);
}

TEST(SampleMixture, GradientReachesOnlyTheChosenComponent) {
  ad::Tape<double> t;
  std::vector<GaussianVar<double>> comps{
      {t.variable(Tensor<double>({1, 1})), t.variable(Tensor<double>({1, 1}))},
      {t.variable(Tensor<double>({1, 1}, 50.0)), t.variable(Tensor<double>({1, 1}))}};
  Rng rng(5);
  const auto z = sample_mixture(comps, std::vector<double>{0.5, 0.5}, rng);
  const bool second = z.item() > 25.0;
  const auto g = t.backward(ad::sum(z));
  EXPECT_EQ(g[comps[0].mean].item(), second ? 0.0 : 1.0);
  EXPECT_EQ(g[comps[1].mean].item(), second ? 1.0 : 0.0);
}

TEST(Generate, ConditionalShapesAndDeterminism) {
  const auto model = toy_model(3, {2, 2});
  const auto batch = toy::batch<double>(model.specs(), 6, 9);
  for (const std::vector<bool> mask : {std::vector<bool>{true, true}, {true, false}, {false, true}}) {
    Rng r1(11), r2(11);
    const auto a = conditional_generate(model, batch, mask, r1);
    const auto b = conditional_generate(model, batch, mask, r2);
    ASSERT_EQ(a.size(), 2u);
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_EQ(a[j].shape(), batch.data[j].shape());
      EXPECT_EQ(a[j], b[j]);
      EXPECT_TRUE(all_finite(a[j]));
    }
  }
  Rng r(1);
  EXPECT_THROW(conditional_generate(model, batch, {false, false}, r), std::invalid_argument);
}

TEST(Generate, CategoricalOutputsAreOneHot) {
  const auto model = toy_model();
  Rng rng(12);
  const auto g = random_generate(model, 16, rng);
  for (std::size_t r = 0; r < 16 * 2; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) s += g[1][r * 3 + k];
    EXPECT_EQ(s, 1.0);
  }
}

TEST(Generate, RandomShapesSeedAndFiniteness) {
  const auto model = toy_model(3, {1, 0});
  Rng r1(13), r2(13), r3(14);
  const auto a = random_generate(model, 16, r1), b = random_generate(model, 16, r2), c = random_generate(model, 16, r3);
  EXPECT_EQ(a[0].shape(), (Shape{16, 3}));
  EXPECT_EQ(a[1].shape(), (Shape{16, 6}));
  EXPECT_EQ(a[0], b[0]);
  EXPECT_EQ(a[1], b[1]);
  EXPECT_NE(a[0], c[0]);
  EXPECT_TRUE(all_finite(a[0]));
  EXPECT_THROW(random_generate(model, 0, r1), std::invalid_argument);
}

TEST(BindFlat, MatchesDirectBinding) {
  const auto model = toy_model(2, {1, 1});
  const auto batch = toy::batch<double>(model.specs(), 3, 15);
  ad::Tape<double> t1, t2;
  const auto a = encode(bind(model, t1, false), 1, t1.constant(batch.data[1]));
  const auto b = encode(bind_flat(model, t2.variable(model.flatten())), 1, t2.constant(batch.data[1]));
  EXPECT_EQ(a.content.mean.value(), b.content.mean.value());
  EXPECT_EQ(a.style->log_var.value(), b.style->log_var.value());
}

TEST(Model, FloatCastAgreesWithDouble) {
  const auto model = toy_model();
  const auto fm = model.cast<float>();
  const auto batch = toy::batch<double>(model.specs(), 4, 16);
  ad::Tape<double> td;
  ad::Tape<float> tf;
  const auto qd = encode(bind(model, td, false), 0, td.constant(batch.data[0]));
  const auto qf = encode(bind(fm, tf, false), 0, tf.constant(batch.data[0].cast<float>()));
  for (std::size_t i = 0; i < qd.content.mean.size(); ++i)
    EXPECT_NEAR(qd.content.mean.value()[i], qf.content.mean.value()[i], 1e-5);
}

TEST(Representation, PoeMeansWithoutPrior) {
  const auto model = toy_model();
  const auto batch = toy::batch<double>(model.specs(), 4, 17);
  const auto rep = shared_representation(model, batch, {true, false});
  ad::Tape<double> t;
  const auto q = encode(bind(model, t, false), 0, t.constant(batch.data[0]));
  EXPECT_EQ(rep, q.content.mean.value());
}

}  // namespace
}  // namespace mmjsd
