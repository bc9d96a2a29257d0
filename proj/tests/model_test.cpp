#include <gtest/gtest.h>

#include <numeric>

#include "mbrbf/errors.hpp"
#include "mbrbf/model.hpp"
#include "test_util.hpp"

using namespace mbrbf;
using mbrbf::testing::random_tensor;

namespace {

ModelConfig tiny_config(HeadKind head = HeadKind::rbf) {
  ModelConfig cfg;
  cfg.head_kind = head;
  cfg.branches = 3;
  cfg.units = 2;
  cfg.classes = 4;
  cfg.sigma_init = 1.0;
  cfg.seed = 9;
  return cfg;
}

// Same network with branch b moved to position perm[b]: reduction filter,
// branch parameters and the classifier's column block move together.
MBModel permute_branches(const MBModel& m, const std::vector<std::size_t>& perm) {
  MBModel p = m;
  const std::size_t C = m.reduce.channels(), U = m.config().units, K = m.config().classes;
  const std::size_t F = m.classifier.features();
  for (std::size_t b = 0; b < perm.size(); ++b) {
    const std::size_t to = perm[b];
    for (std::size_t c = 0; c < C; ++c) p.reduce.weights.at({to, c}) = m.reduce.weights.at({b, c});
    p.reduce.bias[to] = m.reduce.bias[b];
    if (m.config().head_kind == HeadKind::rbf) {
      p.rbf_branches[to] = m.rbf_branches[b];
    } else {
      p.dense_branches[to] = m.dense_branches[b];
    }
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t u = 0; u < U; ++u) {
        p.classifier.weights[k * F + to * U + u] = m.classifier.weights[k * F + b * U + u];
      }
    }
  }
  return p;
}

}  // namespace

TEST(ModelBuild, EightByFourShapes) {
  ModelConfig cfg;
  const MBModel m = model_build(cfg, {8, 7, 7});
  ASSERT_EQ(m.rbf_branches.size(), 8u);
  for (const auto& br : m.rbf_branches) {
    EXPECT_EQ(br.centers.shape(), (Shape{4, 49}));
    EXPECT_EQ(br.log_radii.shape(), (Shape{4}));
    for (double lr : br.log_radii.data()) EXPECT_DOUBLE_EQ(std::exp(lr), 0.0528);
  }
  EXPECT_EQ(m.classifier.weights.shape(), (Shape{7, 32}));
  for (double b : m.classifier.bias.data()) EXPECT_EQ(b, 0.0);
  EXPECT_EQ(m.branch_dim(), 49u);
}

TEST(ModelBuild, FourByEightAlsoGivesWidth32) {
  ModelConfig cfg;
  cfg.branches = 4;
  cfg.units = 8;
  const MBModel m = model_build(cfg, {8, 7, 7});
  EXPECT_EQ(m.classifier.weights.shape(), (Shape{7, 32}));
  EXPECT_EQ(m.config().concat_width(), 32u);
}

TEST(ModelBuild, LargeBackboneGeometry) {
  ModelConfig cfg;
  cfg.branches = 16;
  const MBModel m = model_build(cfg, {512, 7, 7});
  EXPECT_EQ(m.feature_shape().size(), 25088u);
  EXPECT_EQ(m.reduce.weights.shape(), (Shape{16, 512}));
  EXPECT_EQ(m.branch_dim(), 49u);
  EXPECT_EQ(m.classifier.features(), 64u);
}

TEST(ModelBuild, CentersInUnitIntervalAndSeedDeterministic) {
  ModelConfig cfg;
  cfg.seed = 5;
  const MBModel a = model_build(cfg, {8, 7, 7}), b = model_build(cfg, {8, 7, 7});
  const auto sa = a.state(), sb = b.state();
  ASSERT_EQ(sa.size(), sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    EXPECT_EQ(sa[i].first, sb[i].first);
    EXPECT_TRUE(sa[i].second->bit_equal(*sb[i].second)) << sa[i].first;
  }
  for (const auto& br : a.rbf_branches) {
    for (double c : br.centers.data()) {
      EXPECT_GE(c, 0.0);
      EXPECT_LT(c, 1.0);
    }
  }
  cfg.seed = 6;
  const MBModel c = model_build(cfg, {8, 7, 7});
  EXPECT_FALSE(c.rbf_branches[0].centers.bit_equal(a.rbf_branches[0].centers));
}

TEST(ModelBuild, MatchedHeadsShareReductionAndClassifierInit) {
  ModelConfig cfg;
  const MBModel r = model_build(cfg, {8, 7, 7});
  cfg.head_kind = HeadKind::dense;
  const MBModel d = model_build(cfg, {8, 7, 7});
  EXPECT_TRUE(r.reduce.weights.bit_equal(d.reduce.weights));
  EXPECT_TRUE(r.classifier.weights.bit_equal(d.classifier.weights));
}

TEST(ModelBuild, InvalidConfigs) {
  ModelConfig cfg;
  cfg.classes = 1;
  EXPECT_THROW(model_build(cfg, {8, 7, 7}), ConfigError);
  cfg = {};
  cfg.branches = 0;
  EXPECT_THROW(model_build(cfg, {8, 7, 7}), ConfigError);
  cfg = {};
  cfg.sigma_init = 0.0;
  EXPECT_THROW(model_build(cfg, {8, 7, 7}), ConfigError);
}

TEST(ModelForward, ProbabilitiesSumToOne) {
  ModelConfig cfg;
  cfg.sigma_init = 2.0;
  const MBModel m = model_build(cfg, {8, 7, 7});
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto r = model_forward(m, random_tensor(rng, {8, 7, 7}, 0.0, 1.0));
    ASSERT_EQ(r.probs.size(), 7u);
    EXPECT_NEAR(std::accumulate(r.probs.begin(), r.probs.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(ModelForward, WrongShapeIsShapeError) {
  const MBModel m = model_build(tiny_config(), {4, 3, 3});
  EXPECT_THROW(model_forward(m, Tensor({4, 3, 4})), ShapeError);
  FeatureBlock fb{Tensor({5, 3, 3}), "x"};
  EXPECT_THROW(model_forward(m, fb), ShapeError);
}

TEST(ModelForward, BranchPermutationLeavesProbabilitiesUnchanged) {
  for (HeadKind head : {HeadKind::rbf, HeadKind::dense}) {
    const MBModel m = model_build(tiny_config(head), {4, 3, 3});
    const MBModel p = permute_branches(m, {2, 0, 1});
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
      const Tensor x = random_tensor(rng, {4, 3, 3}, 0.0, 1.0);
      const auto a = model_forward(m, x).probs, b = model_forward(p, x).probs;
      for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
    }
  }
}

TEST(ModelForward, ClassifierBiasShiftIsInvisible) {
  MBModel m = model_build(tiny_config(), {4, 3, 3});
  Rng rng(4);
  const Tensor x = random_tensor(rng, {4, 3, 3});
  const auto before = model_forward(m, x).probs;
  for (auto& b : m.classifier.bias.data()) b += 3.25;
  const auto after = model_forward(m, x).probs;
  for (std::size_t k = 0; k < before.size(); ++k) EXPECT_NEAR(before[k], after[k], 1e-12);
}

TEST(ModelBackward, DeterministicAndStaleCacheRejected) {
  MBModel m = model_build(tiny_config(), {4, 3, 3});
  Rng rng(2);
  const Tensor x = random_tensor(rng, {4, 3, 3}, 0.0, 1.0);
  const auto f1 = model_forward(m, x), f2 = model_forward(m, x);
  const auto g1 = model_backward(m, f1.cache, 1), g2 = model_backward(m, f2.cache, 1);
  ASSERT_EQ(g1.grads.size(), g2.grads.size());
  for (std::size_t i = 0; i < g1.grads.size(); ++i) {
    EXPECT_TRUE(g1.grads.entries()[i].tensor.bit_equal(g2.grads.entries()[i].tensor));
  }
  m.bump_generation();
  EXPECT_THROW(model_backward(m, f1.cache, 1), InternalError);
  EXPECT_THROW(model_backward(m, model_forward(m, x).cache, 4), ArgumentError);
}

TEST(ModelBackward, GradientNamesFollowTrainableParameters) {
  ModelConfig cfg = tiny_config();
  cfg.train_sigma = false;
  MBModel m = model_build(cfg, {4, 3, 3});
  const auto params = m.trainable_parameters();
  for (const auto& p : params) EXPECT_EQ(p.name.find("log_radii"), std::string::npos);
  Rng rng(2);
  const auto g = model_backward(m, model_forward(m, random_tensor(rng, {4, 3, 3})).cache, 0);
  ASSERT_EQ(g.grads.size(), params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    EXPECT_EQ(g.grads.entries()[i].name, params[i].name);
}

TEST(ModelBackward, FrozenBackboneContributesNoGradients) {
  BackboneConfig bc;
  bc.input_shape = {1, 12, 12};
  bc.blocks = {{4, 3, 2}, {4, 3, 2}};
  ModelConfig cfg = tiny_config();
  cfg.feature_source = FeatureSource::backbone;
  MBModel m = model_build(cfg, backbone_init(bc).output_shape(), backbone_init(bc));
  Rng rng(7);
  const Tensor img = random_tensor(rng, {1, 12, 12}, 0.0, 1.0);
  auto g = model_backward(m, model_forward(m, img).cache, 2);
  EXPECT_FALSE(g.grads.contains_prefix("backbone."));
  for (const auto& p : m.trainable_parameters()) EXPECT_NE(p.name.rfind("backbone.", 0), 0u);

  m.backbone->set_frozen(false);
  g = model_backward(m, model_forward(m, img).cache, 2);
  EXPECT_TRUE(g.grads.contains_prefix("backbone."));
}

TEST(Predict, ArgmaxOverProbabilities) {
  MBModel m = model_build(tiny_config(), {4, 3, 3});
  for (auto& w : m.classifier.weights.data()) w = 0.0;
  m.classifier.bias = Tensor({4}, std::vector<double>{0.1, 0.6, 0.3, 0.0});
  Rng rng(1);
  EXPECT_EQ(predict(m, random_tensor(rng, {4, 3, 3})), 1u);
  m.classifier.bias = Tensor({4}, std::vector<double>{0.0, 0.1, 0.5, 0.5});
  EXPECT_EQ(predict(m, random_tensor(rng, {4, 3, 3})), 2u);
}
