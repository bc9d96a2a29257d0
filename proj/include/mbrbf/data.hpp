#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mbrbf/backbone.hpp"
#include "mbrbf/tensor.hpp"

namespace mbrbf {

enum class Split { unassigned, train, val, test };

std::string to_string(Split split);
/// "train" | "val" | "test" | "" (unassigned); anything else throws ValidationError.
Split parse_split(const std::string& text);

struct Record {
  std::string sample_id;
  std::string path;
  std::size_t label = 0;
  Split split = Split::unassigned;
  std::string source;
};

inline constexpr const char* kManifestHeader = "sample_id,path,label,split,source";

struct DatasetManifest {
  std::vector<Record> records;
  std::size_t classes = 0;
  /// Relative record paths resolve against this directory.
  std::filesystem::path base_dir;

  std::vector<std::size_t> indices(Split split) const;
  std::size_t count(Split split) const { return indices(split).size(); }
  /// Distinct source tags in first-seen order.
  std::vector<std::string> sources() const;
  std::filesystem::path resolve(const Record& r) const;
};

/// Reads and validates a manifest CSV. The class count is max label + 1
/// unless `classes` is given, in which case larger labels are rejected.
DatasetManifest load_manifest(const std::filesystem::path& path,
                              std::optional<std::size_t> classes = std::nullopt);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct SplitFractions {
  double test = 0.2;
  double val = 0.1;
};

/// Stratified per label: round(test*n) test, round(val*n) validation, rest
/// train. Deterministic in `seed`. Classes with fewer than 3 samples throw.
DatasetManifest split_dataset(std::vector<Record> records, std::uint64_t seed,
                              SplitFractions fractions = {});

/// Seed for one epoch's shuffle.
std::uint64_t epoch_seed(std::uint64_t run_seed, std::size_t epoch);

/// Record indices grouped into batches. The train split is shuffled by
/// `seed`; other splits keep manifest order. The last batch may be short.
std::vector<std::vector<std::size_t>> batch_iter(const DatasetManifest& manifest, Split split,
                                                 std::size_t batch_size, std::uint64_t seed);

/// Manifest plus every sample tensor held in memory, index-aligned with
/// records. Copies share the sample storage, so re-splitting is cheap.
struct Dataset {
  DatasetManifest manifest;
  std::shared_ptr<const std::vector<Tensor>> samples;

  const Tensor& input(std::size_t i) const { return samples->at(i); }
  std::size_t size() const { return manifest.records.size(); }
};

Dataset load_dataset(const DatasetManifest& manifest);

// ---------------------------------------------------------------------------
// synthetic data

/// Classes made of several well-separated sub-populations ("modes"), so that
/// samples of one class can be far apart while each mode is tight.
struct SynthConfig {
  std::size_t classes = 4;
  std::size_t modes_per_class = 2;
  std::size_t samples_per_mode = 60;
  FeatureShape feature_shape{8, 7, 7};
  /// Root-mean-square distance between two modes of one class. Prototypes
  /// sit evenly on a circle in a random plane around a shared base pattern,
  /// with the modes of each class spread apart and other classes in between.
  double mode_separation = 4.0;
  /// Per-element standard deviation of the Gaussian noise around a prototype.
  double noise_scale = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthDataset {
  Dataset data;
  /// classes * modes_per_class prototypes, class-major.
  std::vector<Tensor> prototypes;
};

SynthDataset gen_bimodal_synth(const SynthConfig& cfg);
/// Writes features/<sample_id>.mbrt and manifest.csv under `dir`; record
/// paths become relative to `dir`.
DatasetManifest write_synth(const SynthDataset& synth, const std::filesystem::path& dir);

}  // namespace mbrbf
