#include <gtest/gtest.h>

#include "mbrbf/backbone.hpp"
#include "mbrbf/errors.hpp"
#include "mbrbf/grad_check.hpp"
#include "mbrbf/tensor_io.hpp"
#include "test_util.hpp"

using namespace mbrbf;
using mbrbf::testing::random_tensor;
using mbrbf::testing::TempDir;

TEST(Backbone, DefaultGeometryGives64x6x6) {
  // 48 -> 24 -> 12 -> 6 after three 2x pools.
  const Backbone bb = backbone_init(BackboneConfig{});
  EXPECT_EQ(bb.output_shape(), (FeatureShape{64, 6, 6}));
  Rng rng(1);
  const Tensor img = random_tensor(rng, {1, 48, 48}, 0.0, 1.0);
  EXPECT_EQ(bb.forward(img).shape(), (Shape{64, 6, 6}));
}

TEST(Backbone, SameSeedSameWeights) {
  BackboneConfig cfg;
  cfg.seed = 17;
  Backbone a = backbone_init(cfg), b = backbone_init(cfg);
  for (std::size_t i = 0; i < a.weights().size(); ++i) {
    EXPECT_TRUE(a.weights()[i].bit_equal(b.weights()[i]));
    EXPECT_TRUE(a.biases()[i].bit_equal(b.biases()[i]));
  }
  cfg.seed = 18;
  Backbone c = backbone_init(cfg);
  EXPECT_FALSE(a.weights()[0].bit_equal(c.weights()[0]));
}

TEST(Backbone, ConfigErrors) {
  BackboneConfig cfg;
  cfg.input_shape = {1, 8, 8};
  cfg.blocks = {{4, 3, 4}, {4, 3, 4}};
  EXPECT_THROW(backbone_init(cfg), ConfigError);
  cfg.blocks = {};
  EXPECT_THROW(backbone_init(cfg), ConfigError);
  cfg.blocks = {{4, 2, 2}};
  EXPECT_THROW(backbone_init(cfg), ConfigError);
}

TEST(Backbone, ZeroImageGivesZeroBlock) {
  const Backbone bb = backbone_init(BackboneConfig{});
  const Tensor out = bb.forward(Tensor({1, 48, 48}));
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backbone, PureFunctionOfImage) {
  const Backbone bb = backbone_init(BackboneConfig{});
  Rng rng(2);
  const Tensor img = random_tensor(rng, {1, 48, 48});
  EXPECT_TRUE(bb.forward(img).bit_equal(bb.forward(img)));
  EXPECT_TRUE(backbone_forward(bb, img, "x").tensor.bit_equal(bb.forward(img)));
}

TEST(Backbone, WrongImageShapeIsShapeError) {
  const Backbone bb = backbone_init(BackboneConfig{});
  EXPECT_THROW(bb.forward(Tensor({1, 32, 32})), ShapeError);
}

TEST(Backbone, GradientsMatchFiniteDifferences) {
  BackboneConfig cfg;
  cfg.input_shape = {2, 6, 6};
  cfg.blocks = {{3, 3, 2}, {2, 3, 1}};
  cfg.seed = 4;
  Backbone bb = backbone_init(cfg);
  Rng rng(5);
  for (auto& b : bb.biases()) {
    for (auto& v : b.data()) v = rng.uniform(0.05, 0.2);
  }
  const Tensor img = random_tensor(rng, {2, 6, 6}, 0.0, 1.0);
  const Tensor up = random_tensor(rng, bb.output_shape().shape());
  Backbone::Cache cache;
  bb.forward(img, &cache);
  const GradientSet g = bb.backward(cache, up);
  auto loss = [&] {
    const Tensor out = bb.forward(img);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * up[i];
    return s;
  };
  auto params = bb.parameters();
  std::vector<GradProbe> probes;
  for (auto& p : params) probes.push_back({p.name, p.tensor->data(), g.find(p.name)->data()});
  const auto r = grad_check(loss, probes);
  // Pool ties and ReLU kinks are measure-zero for random inputs.
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst_probe << "[" << r.worst_index << "]";
}

TEST(FeatureBlocks, LoadsLargeBlockAndRejectsRank2) {
  TempDir dir;
  Rng rng(1);
  const Tensor block = random_tensor(rng, {512, 7, 7});
  write_tensor(block, dir / "s001.mbrt");
  const FeatureBlock fb = load_feature_block(dir / "s001.mbrt");
  EXPECT_EQ(fb.tensor.shape(), (Shape{512, 7, 7}));
  EXPECT_EQ(fb.sample_id, "s001");
  EXPECT_TRUE(fb.tensor.bit_equal(block));
  write_tensor(Tensor({7, 7}), dir / "flat.mbrt");
  EXPECT_THROW(load_feature_block(dir / "flat.mbrt"), FormatError);
}

TEST(FeatureShapeText, ParsesBothSeparators) {
  EXPECT_EQ(parse_feature_shape("512,7,7"), (FeatureShape{512, 7, 7}));
  EXPECT_EQ(parse_feature_shape("8x7x7"), (FeatureShape{8, 7, 7}));
  EXPECT_THROW(parse_feature_shape("8,7"), Error);
  EXPECT_EQ(parse_blocks(format_blocks(BackboneConfig{}.blocks)), BackboneConfig{}.blocks);
}
