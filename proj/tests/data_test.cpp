#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <set>

#include "mbrbf/data.hpp"
#include "mbrbf/errors.hpp"
#include "mbrbf/tensor_io.hpp"
#include "test_util.hpp"

using namespace mbrbf;
using mbrbf::testing::TempDir;

namespace {

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << '\n';
}

std::vector<Record> balanced_records(std::size_t classes, std::size_t per_class) {
  std::vector<Record> out;
  for (std::size_t k = 0; k < classes; ++k) {
    for (std::size_t i = 0; i < per_class; ++i) {
      Record r;
      r.sample_id = "k" + std::to_string(k) + "_" + std::to_string(i);
      r.path = r.sample_id + ".mbrt";
      r.label = k;
      out.push_back(r);
    }
  }
  return out;
}

double sq_dist(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

TEST(Manifest, CkSizedSplitCounts) {
  TempDir dir;
  std::vector<std::string> lines{kManifestHeader};
  std::size_t id = 0;
  auto add = [&](std::size_t n, const char* split) {
    for (std::size_t i = 0; i < n; ++i, ++id) {
      lines.push_back("s" + std::to_string(id) + ",img/s" + std::to_string(id) + ".mbrt," +
                      std::to_string(id % 7) + "," + split + ",ck");
    }
  };
  add(877, "train");
  add(94, "val");
  add(123, "test");
  write_lines(dir / "m.csv", lines);
  const auto m = load_manifest(dir / "m.csv");
  EXPECT_EQ(m.classes, 7u);
  EXPECT_EQ(m.count(Split::train), 877u);
  EXPECT_EQ(m.count(Split::val), 94u);
  EXPECT_EQ(m.count(Split::test), 123u);
  EXPECT_EQ(m.sources(), std::vector<std::string>{"ck"});
  EXPECT_EQ(m.resolve(m.records[0]), dir.path() / "img/s0.mbrt");
}

TEST(Manifest, SingleRowClassCount) {
  TempDir dir;
  write_lines(dir / "m.csv", {kManifestHeader, "a,a.mbrt,3,train,x"});
  EXPECT_EQ(load_manifest(dir / "m.csv").classes, 4u);
  EXPECT_THROW(load_manifest(dir / "m.csv", 3), ValidationError);
}

TEST(Manifest, RejectsBadRows) {
  TempDir dir;
  write_lines(dir / "m.csv", {kManifestHeader, "a,a.mbrt,0,tset,x"});
  EXPECT_THROW(load_manifest(dir / "m.csv"), ValidationError);
  write_lines(dir / "m.csv", {kManifestHeader, "a,a.mbrt,0,train,x", "a,b.mbrt,1,train,x"});
  EXPECT_THROW(load_manifest(dir / "m.csv"), ValidationError);
  write_lines(dir / "m.csv", {kManifestHeader, "a,a.mbrt,-1,train,x"});
  EXPECT_THROW(load_manifest(dir / "m.csv"), ValidationError);
  write_lines(dir / "m.csv", {"id,path", "a,a.mbrt"});
  EXPECT_THROW(load_manifest(dir / "m.csv"), ValidationError);
  write_lines(dir / "m.csv", {kManifestHeader});
  EXPECT_THROW(load_manifest(dir / "m.csv"), ValidationError);
}

TEST(Manifest, WriteThenLoadRoundTrips) {
  TempDir dir;
  auto m = split_dataset(balanced_records(3, 10), 4);
  for (auto& r : m.records) r.source = r.label == 1 ? "b" : "a";
  write_manifest(m, dir / "m.csv");
  const auto back = load_manifest(dir / "m.csv");
  ASSERT_EQ(back.records.size(), m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    EXPECT_EQ(back.records[i].sample_id, m.records[i].sample_id);
    EXPECT_EQ(back.records[i].split, m.records[i].split);
    EXPECT_EQ(back.records[i].source, m.records[i].source);
  }
}

TEST(SplitDataset, ThousandBalancedSamples) {
  const auto m = split_dataset(balanced_records(10, 100), 1);
  EXPECT_EQ(m.count(Split::test), 200u);
  EXPECT_EQ(m.count(Split::train) + m.count(Split::val), 800u);
  EXPECT_GE(m.count(Split::train), 700u);
  std::map<std::size_t, std::size_t> test_per_class;
  for (auto i : m.indices(Split::test)) ++test_per_class[m.records[i].label];
  for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(test_per_class[k], 20u);
}

TEST(SplitDataset, SingleClassEightyTwenty) {
  const auto m = split_dataset(balanced_records(1, 100), 3);
  EXPECT_EQ(m.count(Split::test), 20u);
  EXPECT_EQ(m.count(Split::train) + m.count(Split::val), 80u);
}

TEST(SplitDataset, DeterministicInSeed) {
  const auto a = split_dataset(balanced_records(4, 30), 9);
  const auto b = split_dataset(balanced_records(4, 30), 9);
  const auto c = split_dataset(balanced_records(4, 30), 10);
  bool differs = false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].split, b.records[i].split);
    differs |= a.records[i].split != c.records[i].split;
  }
  EXPECT_TRUE(differs);
}

TEST(SplitDataset, EveryClassKeepsTrainingSamples) {
  for (std::size_t n = 3; n < 40; ++n) {
    const auto m = split_dataset(balanced_records(2, n), n);
    std::map<std::size_t, std::size_t> train;
    for (auto i : m.indices(Split::train)) ++train[m.records[i].label];
    EXPECT_GE(train[0], 1u);
    EXPECT_GE(train[1], 1u);
    EXPECT_EQ(m.count(Split::unassigned), 0u);
  }
  EXPECT_THROW(split_dataset(balanced_records(2, 2), 0), ValidationError);
}

TEST(BatchIter, CkTrainSplitBatches) {
  DatasetManifest m;
  m.records = balanced_records(1, 877);
  for (auto& r : m.records) r.split = Split::train;
  const auto batches = batch_iter(m, Split::train, 32, 5);
  ASSERT_EQ(batches.size(), 28u);
  EXPECT_EQ(batches.back().size(), 13u);
  std::set<std::size_t> seen;
  for (const auto& b : batches) seen.insert(b.begin(), b.end());
  EXPECT_EQ(seen.size(), 877u);
}

TEST(BatchIter, SmallSplitAndDeterminism) {
  DatasetManifest m;
  m.records = balanced_records(1, 10);
  for (auto& r : m.records) r.split = Split::train;
  EXPECT_EQ(batch_iter(m, Split::train, 10, 1).size(), 1u);
  EXPECT_EQ(batch_iter(m, Split::train, 64, 1).size(), 1u);
  EXPECT_EQ(batch_iter(m, Split::train, 3, epoch_seed(7, 2)),
            batch_iter(m, Split::train, 3, epoch_seed(7, 2)));
  EXPECT_NE(epoch_seed(7, 1), epoch_seed(7, 2));
  EXPECT_THROW(batch_iter(m, Split::test, 3, 1), IterationError);
  EXPECT_THROW(batch_iter(m, Split::train, 0, 1), ArgumentError);
}

TEST(Synth, ReferenceCounts) {
  const auto s = gen_bimodal_synth(SynthConfig{});
  EXPECT_EQ(s.data.size(), 480u);
  ASSERT_EQ(s.prototypes.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = i + 1; j < 8; ++j) EXPECT_GT(sq_dist(s.prototypes[i], s.prototypes[j]), 0.1);
  }
  EXPECT_EQ(s.data.input(0).shape(), (Shape{8, 7, 7}));
  std::map<std::string, std::size_t> per_source;
  for (const auto& r : s.data.manifest.records) ++per_source[r.source];
  EXPECT_EQ(per_source["mode0"], 240u);
  EXPECT_EQ(per_source["mode1"], 240u);
  EXPECT_EQ(s.data.manifest.count(Split::unassigned), 0u);
}

TEST(Synth, ModeSeparationIsRootMeanSquareDistance) {
  SynthConfig cfg;
  cfg.modes_per_class = 3;
  const auto s = gen_bimodal_synth(cfg);
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t k = 0; k < cfg.classes; ++k) {
    for (std::size_t p = 0; p < 3; ++p) {
      for (std::size_t q = p + 1; q < 3; ++q, ++pairs)
        sum += sq_dist(s.prototypes[k * 3 + p], s.prototypes[k * 3 + q]);
    }
  }
  EXPECT_NEAR(std::sqrt(sum / pairs), cfg.mode_separation, 1e-9);
}

TEST(Synth, VanishingNoiseReturnsPrototypes) {
  SynthConfig cfg;
  cfg.noise_scale = 1e-30;
  const auto s = gen_bimodal_synth(cfg);
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    const auto& r = s.data.manifest.records[i];
    const std::size_t mode = std::stoul(r.source.substr(4));
    const Tensor& proto = s.prototypes[r.label * cfg.modes_per_class + mode];
    EXPECT_LT(sq_dist(s.data.input(i), proto), 1e-40);
  }
}

TEST(Synth, NearestPrototypeRecoversLabels) {
  const SynthConfig cfg;
  const auto s = gen_bimodal_synth(cfg);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t p = 0; p < s.prototypes.size(); ++p) {
      const double d = sq_dist(s.data.input(i), s.prototypes[p]);
      if (d < best_d) best_d = d, best = p;
    }
    correct += (best / cfg.modes_per_class == s.data.manifest.records[i].label);
  }
  EXPECT_EQ(correct, s.data.size());
  for (std::size_t p = 0; p < s.prototypes.size(); ++p) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t q = 0; q < s.prototypes.size(); ++q) {
      const double d = sq_dist(s.prototypes[p], s.prototypes[q]);
      if (d < best_d) best_d = d, best = q;
    }
    EXPECT_EQ(best, p);
  }
}

TEST(Synth, SameSeedBitIdenticalAndWrittenFilesLoad) {
  SynthConfig cfg;
  cfg.samples_per_mode = 5;
  cfg.seed = 7;
  const auto a = gen_bimodal_synth(cfg), b = gen_bimodal_synth(cfg);
  for (std::size_t i = 0; i < a.data.size(); ++i) EXPECT_TRUE(a.data.input(i).bit_equal(b.data.input(i)));
  TempDir dir;
  write_synth(a, dir.path());
  const auto m = load_manifest(dir / "manifest.csv");
  const auto d = load_dataset(m);
  ASSERT_EQ(d.size(), a.data.size());
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_TRUE(d.input(i).bit_equal(a.data.input(i)));
  cfg.noise_scale = 0.0;
  EXPECT_THROW(gen_bimodal_synth(cfg), ConfigError);
}

TEST(Synth, TwoModeClassesShareOneCentroid) {
  const SynthConfig cfg;
  const auto s = gen_bimodal_synth(cfg);
  const std::size_t n = s.prototypes[0].size();
  std::vector<double> first(n);
  for (std::size_t k = 0; k < cfg.classes; ++k) {
    const auto a = s.prototypes[2 * k].data(), b = s.prototypes[2 * k + 1].data();
    for (std::size_t j = 0; j < n; ++j) {
      const double mid = 0.5 * (a[j] + b[j]);
      if (k == 0) first[j] = mid;
      else EXPECT_NEAR(mid, first[j], 1e-12);
    }
  }
}
