#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mbrbf/data.hpp"
#include "mbrbf/model.hpp"
#include "mbrbf/optim.hpp"

namespace mbrbf {

enum class OptimizerKind { adam, sgd };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& text);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  /// NaN when the manifest has no validation split.
  double val_acc = 0.0;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  OptimizerKind optimizer = OptimizerKind::adam;
  /// Adam step size, or the plain SGD learning rate.
  double lr = 1e-3;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  /// Print a progress line every n epochs; 0 disables.
  std::size_t report_every = 0;
  /// Keep the manifest's split column instead of re-splitting per seed.
  bool pin_splits = false;
  std::function<void(const EpochStats&)> on_epoch = {};

  void validate() const;
};

struct RunHistory {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  /// NaN when the manifest has no test split.
  double test_acc = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  RunHistory history;
  /// Trainable parameters at the best validation epoch; also left in the model.
  std::vector<NamedTensor> best_parameters;
  AdamState adam;
};

/// Mini-batch training: per epoch the train split is shuffled, each batch's
/// per-sample gradients are averaged in sample order, and one optimizer step
/// is taken. The model ends at its best-validation parameters (ties go to the
/// earliest epoch). Throws DivergenceError on a non-finite loss.
TrainResult train(MBModel& model, const Dataset& data, const TrainConfig& tc, std::uint64_t seed);

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);

  void add(std::size_t truth, std::size_t predicted);
  std::size_t classes() const { return classes_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const;
  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_sum(std::size_t truth) const;
  double accuracy() const;

  /// Header "truth,<class names>", then one labelled row of counts per true class.
  std::string to_csv(const std::vector<std::string>& class_names = {}) const;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

struct SourceTally {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const;
};

struct EvalResult {
  double accuracy = 0.0;
  ConfusionMatrix confusion{2};
  std::vector<std::size_t> indices;
  std::vector<std::size_t> predictions;
  std::map<std::string, SourceTally> per_source;
};

/// Top-1 accuracy and confusion matrix over one split. Throws EvaluationError
/// for an empty split.
EvalResult evaluate(const MBModel& model, const Dataset& data, Split split);

/// The dataset as used by one seeded run: re-split with `seed` unless pinned.
Dataset dataset_for_seed(const Dataset& data, std::uint64_t seed, bool pin_splits);

// ---------------------------------------------------------------------------
// ablation grid

struct GridRun {
  std::size_t branches = 0;
  std::size_t units = 0;
  std::uint64_t seed = 0;
  double test_acc = 0.0;
  bool failed = false;
  std::string error;
};

struct GridCell {
  std::size_t branches = 0;
  std::size_t units = 0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t runs = 0;
  std::size_t failures = 0;
  bool failed() const { return runs == 0; }
};

struct GridResult {
  std::vector<GridRun> runs;
  std::vector<GridCell> cells;

  std::string runs_csv() const;
  std::string cells_csv() const;
  const GridCell& cell(std::size_t branches, std::size_t units) const;
};

/// Trains every (branches, units, seed) combination; a diverged run marks
/// its entry failed and the sweep continues. Runs may execute in parallel,
/// results are ordered by (branches, units, seed) as given.
GridResult ablation_grid(const std::vector<std::size_t>& branch_values,
                         const std::vector<std::size_t>& unit_values,
                         const std::vector<std::uint64_t>& seeds, const Dataset& data,
                         const ModelConfig& base, const TrainConfig& tc,
                         const std::optional<Backbone>& backbone = std::nullopt);

// ---------------------------------------------------------------------------
// head comparison

struct CompareRun {
  HeadKind head = HeadKind::rbf;
  std::uint64_t seed = 0;
  double test_acc = 0.0;
  std::map<std::string, SourceTally> per_source;
};

struct CompareResult {
  std::vector<CompareRun> runs;
  std::vector<std::string> sources;

  double median(HeadKind head) const;
  double median_source(HeadKind head, const std::string& source) const;
  /// Pooled accuracy on each seed's minority sub-population: the source with
  /// the fewest test samples in that run (ties to the first-listed source).
  double minority_accuracy(HeadKind head) const;
  std::string csv() const;
};

/// Trains the RBF and dense heads with identical seeds, splits, backbone and
/// reduction/classifier initialization.
CompareResult compare_heads(const Dataset& data, const ModelConfig& cfg, const TrainConfig& tc,
                            const std::optional<Backbone>& backbone = std::nullopt);

double median(std::vector<double> values);

}  // namespace mbrbf
