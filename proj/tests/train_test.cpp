#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mbrbf/errors.hpp"
#include "mbrbf/train.hpp"
#include "test_util.hpp"

using namespace mbrbf;
using mbrbf::testing::random_tensor;

namespace {

SynthDataset small_synth(std::uint64_t seed = 0) {
  SynthConfig cfg;
  cfg.samples_per_mode = 12;
  cfg.feature_shape = {2, 4, 4};
  cfg.seed = seed;
  return gen_bimodal_synth(cfg);
}

ModelConfig small_model(HeadKind head = HeadKind::rbf) {
  ModelConfig cfg;
  cfg.head_kind = head;
  cfg.branches = 2;
  cfg.units = 3;
  cfg.classes = 4;
  cfg.sigma_init = 1.0;
  return cfg;
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 8;
  tc.lr = 0.01;
  return tc;
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST(Confusion, PerfectAndConstantPredictors) {
  ConfusionMatrix perfect(7);
  for (std::size_t i = 0; i < 123; ++i) perfect.add(i % 7, i % 7);
  EXPECT_EQ(perfect.accuracy(), 1.0);
  for (std::size_t a = 0; a < 7; ++a) {
    for (std::size_t b = 0; b < 7; ++b) {
      if (a != b) EXPECT_EQ(perfect.at(a, b), 0u);
    }
  }
  ConfusionMatrix constant(4);
  for (std::size_t i = 0; i < 40; ++i) constant.add(i % 4, 2);
  EXPECT_DOUBLE_EQ(constant.accuracy(), 0.25);
  EXPECT_EQ(constant.row_sum(1), 10u);
  EXPECT_THROW(constant.add(4, 0), Error);
}

TEST(Confusion, CsvHasHeaderAndOneRowPerClass) {
  ConfusionMatrix cm(3);
  cm.add(0, 1);
  cm.add(2, 2);
  const auto csv = cm.to_csv({"a", "b", "c"});
  EXPECT_EQ(count_lines(csv), 4u);
  EXPECT_NE(csv.find("a,0,1,0"), std::string::npos);
}

TEST(Evaluate, AccountingMatchesPredictions) {
  const auto synth = small_synth();
  MBModel m = model_build(small_model(), {2, 4, 4});
  const auto r = evaluate(m, synth.data, Split::test);
  const auto idx = synth.data.manifest.indices(Split::test);
  ASSERT_EQ(r.indices, idx);
  std::size_t correct = 0;
  std::vector<std::size_t> per_class(4, 0);
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const auto& rec = synth.data.manifest.records[idx[j]];
    EXPECT_EQ(r.predictions[j], predict(m, synth.data.input(idx[j])));
    correct += r.predictions[j] == rec.label;
    ++per_class[rec.label];
  }
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(r.confusion.row_sum(k), per_class[k]);
  EXPECT_EQ(r.confusion.total(), idx.size());
  EXPECT_DOUBLE_EQ(static_cast<double>(r.confusion.trace()) / r.confusion.total(), r.accuracy);
  EXPECT_DOUBLE_EQ(static_cast<double>(correct) / idx.size(), r.accuracy);

  const auto again = evaluate(m, synth.data, Split::test);
  EXPECT_EQ(again.predictions, r.predictions);
  EXPECT_EQ(again.accuracy, r.accuracy);

  Dataset no_test = synth.data;
  for (auto& rec : no_test.manifest.records) {
    if (rec.split == Split::test) rec.split = Split::train;
  }
  EXPECT_THROW(evaluate(m, no_test, Split::test), EvaluationError);
}

TEST(Train, OneEpochProducesOneRecord) {
  const auto synth = small_synth();
  MBModel m = model_build(small_model(), {2, 4, 4});
  const auto r = train(m, synth.data, quick(1), 0);
  ASSERT_EQ(r.history.epochs.size(), 1u);
  EXPECT_EQ(r.history.best_epoch, 1u);
  EXPECT_TRUE(std::isfinite(r.history.epochs[0].train_loss));
}

TEST(Train, LossDecreasesAndLearns) {
  const auto synth = small_synth();
  for (HeadKind head : {HeadKind::rbf, HeadKind::dense}) {
    MBModel m = model_build(small_model(head), {2, 4, 4});
    const auto r = train(m, synth.data, quick(40), 0);
    EXPECT_LT(r.history.epochs.back().train_loss, r.history.epochs.front().train_loss);
    EXPECT_GT(r.history.epochs.back().train_acc, 0.5) << to_string(head);
  }
}

TEST(Train, DeterministicForFixedSeed) {
  const auto synth = small_synth();
  MBModel a = model_build(small_model(), {2, 4, 4});
  MBModel b = model_build(small_model(), {2, 4, 4});
  const auto ra = train(a, synth.data, quick(5), 3);
  const auto rb = train(b, synth.data, quick(5), 3);
  for (std::size_t e = 0; e < 5; ++e)
    EXPECT_EQ(ra.history.epochs[e].train_loss, rb.history.epochs[e].train_loss);
  const auto sa = a.state(), sb = b.state();
  for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_TRUE(sa[i].second->bit_equal(*sb[i].second));
}

TEST(Train, BestValidationParametersAreRestored) {
  const auto synth = small_synth();
  MBModel m = model_build(small_model(), {2, 4, 4});
  const auto r = train(m, synth.data, quick(15), 0);
  double best = -1.0;
  std::size_t best_epoch = 0;
  for (const auto& e : r.history.epochs) {
    if (e.val_acc > best) best = e.val_acc, best_epoch = e.epoch;
  }
  EXPECT_EQ(r.history.best_epoch, best_epoch);
  const auto ev = evaluate(m, synth.data, Split::val);
  EXPECT_DOUBLE_EQ(ev.accuracy, best);
}

TEST(Train, FrozenBackboneStaysBitwiseUnchanged) {
  BackboneConfig bc;
  bc.input_shape = {1, 8, 8};
  bc.blocks = {{3, 3, 2}};
  bc.seed = 2;
  const Backbone bb = backbone_init(bc);

  Rng rng(1);
  DatasetManifest man;
  auto samples = std::make_shared<std::vector<Tensor>>();
  for (std::size_t i = 0; i < 30; ++i) {
    Record r;
    r.sample_id = "img" + std::to_string(i);
    r.path = r.sample_id + ".mbrt";
    r.label = i % 3;
    man.records.push_back(r);
    samples->push_back(random_tensor(rng, {1, 8, 8}, 0.0, 1.0));
  }
  Dataset data{split_dataset(man.records, 0), samples};
  data.manifest.classes = 3;

  ModelConfig cfg = small_model();
  cfg.classes = 3;
  cfg.feature_source = FeatureSource::backbone;
  MBModel m = model_build(cfg, bb.output_shape(), bb);
  const Backbone before = *m.backbone;
  train(m, data, quick(5), 0);
  const auto& after = *m.backbone;
  for (std::size_t i = 0; i < before.config().blocks.size(); ++i) {
    EXPECT_TRUE(before.weights()[i].bit_equal(after.weights()[i]));
    EXPECT_TRUE(before.biases()[i].bit_equal(after.biases()[i]));
  }
}

TEST(Train, RejectsBadConfigs) {
  TrainConfig tc;
  tc.epochs = 0;
  EXPECT_THROW(tc.validate(), ConfigError);
  tc = {};
  tc.batch_size = 0;
  EXPECT_THROW(tc.validate(), ConfigError);
  tc = {};
  tc.lr = -1.0;
  EXPECT_THROW(tc.validate(), ConfigError);
}

TEST(Train, TinyRadiusDiverges) {
  const auto synth = small_synth();
  ModelConfig cfg = small_model();
  cfg.sigma_init = 1e-7;
  MBModel m = model_build(cfg, {2, 4, 4});
  EXPECT_THROW(train(m, synth.data, quick(1), 0), DivergenceError);
}

TEST(Grid, CardinalityAndOrdering) {
  const auto synth = small_synth();
  const auto g = ablation_grid({1, 2}, {1, 3}, {0, 1}, synth.data, small_model(), quick(2));
  ASSERT_EQ(g.runs.size(), 8u);
  ASSERT_EQ(g.cells.size(), 4u);
  EXPECT_EQ(g.runs[0].branches, 1u);
  EXPECT_EQ(g.runs[0].units, 1u);
  EXPECT_EQ(g.runs[7].branches, 2u);
  EXPECT_EQ(g.runs[7].seed, 1u);
  EXPECT_EQ(count_lines(g.cells_csv()), 5u);
  EXPECT_EQ(count_lines(g.runs_csv()), 9u);
  const auto& c = g.cell(2, 3);
  EXPECT_EQ(c.runs, 2u);
  EXPECT_NEAR(c.mean, (g.runs[6].test_acc + g.runs[7].test_acc) / 2.0, 1e-15);
}

TEST(Grid, SingleCellManySeeds) {
  const auto synth = small_synth();
  std::vector<std::uint64_t> seeds(10);
  for (std::size_t i = 0; i < 10; ++i) seeds[i] = i;
  const auto g = ablation_grid({4}, {8}, seeds, synth.data, small_model(), quick(1));
  EXPECT_EQ(g.runs.size(), 10u);
  EXPECT_EQ(g.cells.size(), 1u);
}

TEST(Grid, DivergedRunsAreMarkedFailed) {
  const auto synth = small_synth();
  ModelConfig cfg = small_model();
  cfg.sigma_init = 1e-7;
  const auto g = ablation_grid({1}, {1}, {0}, synth.data, cfg, quick(1));
  EXPECT_TRUE(g.runs[0].failed);
  EXPECT_TRUE(g.cells[0].failed());
  EXPECT_NE(g.cells_csv().find("failed"), std::string::npos);
}

TEST(Compare, TableShapeAndMedians) {
  const auto synth = small_synth();
  TrainConfig tc = quick(3);
  tc.seeds = {0, 1, 2};
  const auto c = compare_heads(synth.data, small_model(), tc);
  EXPECT_EQ(c.runs.size(), 6u);
  EXPECT_EQ(c.sources, (std::vector<std::string>{"mode0", "mode1"}));
  // header + 6 runs + 2 median rows
  EXPECT_EQ(count_lines(c.csv()), 9u);
  std::vector<double> rbf;
  for (const auto& r : c.runs) {
    if (r.head == HeadKind::rbf) rbf.push_back(r.test_acc);
  }
  EXPECT_EQ(c.median(HeadKind::rbf), median(rbf));
  const double minority = c.minority_accuracy(HeadKind::rbf);
  EXPECT_GE(minority, 0.0);
  EXPECT_LE(minority, 1.0);
}

TEST(Median, EvenAndOdd) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_TRUE(std::isnan(median({})));
}
