#include "mbrbf/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <iostream>
#include <limits>
#include <sstream>

#include "mbrbf/errors.hpp"

namespace mbrbf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Feature blocks precomputed once when the backbone cannot change.
using FeatureCache = std::optional<std::vector<Tensor>>;

FeatureCache precompute_features(const MBModel& model, const Dataset& data) {
  if (!model.backbone || !model.backbone->frozen()) return std::nullopt;
  std::vector<Tensor> fmaps(data.size());
  const auto n = static_cast<std::ptrdiff_t>(data.size());
  std::vector<std::exception_ptr> errors(data.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      fmaps[k] = model.backbone->forward(data.input(k));
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return fmaps;
}

ForwardResult forward_sample(const MBModel& model, const Dataset& data, const FeatureCache& cache,
                             std::size_t i) {
  return cache ? model_forward_features(model, (*cache)[i]) : model_forward(model, data.input(i));
}

EvalResult evaluate_impl(const MBModel& model, const Dataset& data, Split split,
                         const FeatureCache& cache) {
  const auto idx = data.manifest.indices(split);
  if (idx.empty()) throw EvaluationError("cannot evaluate empty split '" + to_string(split) + "'");
  const std::size_t K = model.config().classes;
  std::vector<std::size_t> preds(idx.size());
  std::vector<std::exception_ptr> errors(idx.size());
  const auto n = static_cast<std::ptrdiff_t>(idx.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    const auto k = static_cast<std::size_t>(j);
    try {
      preds[k] = argmax(forward_sample(model, data, cache, idx[k]).cache.logits);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  EvalResult r;
  r.confusion = ConfusionMatrix(K);
  r.indices = idx;
  r.predictions = preds;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const auto& rec = data.manifest.records[idx[j]];
    if (rec.label >= K) {
      throw EvaluationError("label " + std::to_string(rec.label) + " of '" + rec.sample_id +
                            "' exceeds model class count");
    }
    r.confusion.add(rec.label, preds[j]);
    auto& tally = r.per_source[rec.source];
    tally.total += 1;
    tally.correct += preds[j] == rec.label ? 1 : 0;
  }
  r.accuracy = r.confusion.accuracy();
  return r;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? kNaN : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << v;
  return os.str();
}

}  // namespace

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(const std::string& text) {
  if (text == "adam") return OptimizerKind::adam;
  if (text == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + text + "' (expected adam or sgd)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
}

TrainResult train(MBModel& model, const Dataset& data, const TrainConfig& tc, std::uint64_t seed) {
  tc.validate();
  if (data.manifest.count(Split::train) == 0) throw IterationError("train split is empty");
  if (data.manifest.classes > model.config().classes) {
    throw ConfigError("dataset has " + std::to_string(data.manifest.classes) +
                      " classes, model has " + std::to_string(model.config().classes));
  }
  const auto t0 = std::chrono::steady_clock::now();
  const FeatureCache cache = precompute_features(model, data);
  const bool has_val = data.manifest.count(Split::val) > 0;

  TrainResult result;
  result.adam.hyper.lr = tc.lr;
  auto params = model.trainable_parameters();
  double best_score = -1.0;

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto batches = batch_iter(data.manifest, Split::train, tc.batch_size, epoch_seed(seed, epoch));
    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];
      std::vector<BackwardResult> per_sample(batch.size());
      std::vector<std::size_t> preds(batch.size());
      std::vector<std::exception_ptr> errors(batch.size());
      const auto n = static_cast<std::ptrdiff_t>(batch.size());
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t j = 0; j < n; ++j) {
        const auto k = static_cast<std::size_t>(j);
        try {
          const std::size_t i = batch[k];
          const auto fwd = forward_sample(model, data, cache, i);
          preds[k] = argmax(fwd.cache.logits);
          per_sample[k] = model_backward(model, fwd.cache, data.manifest.records[i].label);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      }
      for (auto& e : errors) {
        if (!e) continue;
        try {
          std::rethrow_exception(e);
        } catch (const DivergenceError& d) {
          throw DivergenceError("epoch " + std::to_string(epoch + 1) + ", batch " +
                                std::to_string(bi + 1) + ": " + d.what());
        }
      }

      GradientSet grads;
      for (std::size_t k = 0; k < batch.size(); ++k) {
        if (!std::isfinite(per_sample[k].loss)) {
          throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch + 1) +
                                ", batch " + std::to_string(bi + 1));
        }
        loss_sum += per_sample[k].loss;
        correct += preds[k] == data.manifest.records[batch[k]].label ? 1 : 0;
        grads.accumulate(per_sample[k].grads);
      }
      seen += batch.size();
      grads.scale(1.0 / static_cast<double>(batch.size()));
      try {
        if (tc.optimizer == OptimizerKind::adam) {
          adam_step(params, grads, result.adam);
        } else {
          sgd_step(params, grads, tc.lr);
        }
      } catch (const DivergenceError& d) {
        throw DivergenceError("epoch " + std::to_string(epoch + 1) + ", batch " +
                              std::to_string(bi + 1) + ": " + d.what());
      }
      model.bump_generation();
    }

    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.train_loss = loss_sum / static_cast<double>(seen);
    stats.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
    stats.val_acc = has_val ? evaluate_impl(model, data, Split::val, cache).accuracy : kNaN;
    result.history.epochs.push_back(stats);

    const double score = has_val ? stats.val_acc : stats.train_acc;
    if (score > best_score) {
      best_score = score;
      result.history.best_epoch = stats.epoch;
      result.best_parameters = snapshot(params);
    }
    if (tc.on_epoch) tc.on_epoch(stats);
    if (tc.report_every && stats.epoch % tc.report_every == 0) {
      std::cerr << "epoch " << stats.epoch << " loss " << format_double(stats.train_loss)
                << " train_acc " << format_double(stats.train_acc) << " val_acc "
                << format_double(stats.val_acc) << '\n';
    }
  }

  restore(params, result.best_parameters);
  model.bump_generation();
  result.history.test_acc = data.manifest.count(Split::test) > 0
                                ? evaluate_impl(model, data, Split::test, cache).accuracy
                                : kNaN;
  result.history.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// ---------------------------------------------------------------------------

ConfusionMatrix::ConfusionMatrix(std::size_t classes)
    : classes_(classes), counts_(classes * classes, 0) {
  if (classes == 0) throw ArgumentError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  if (truth >= classes_ || predicted >= classes_) throw ArgumentError("class index out of range");
  ++counts_[truth * classes_ + predicted];
}

std::uint64_t ConfusionMatrix::at(std::size_t truth, std::size_t predicted) const {
  if (truth >= classes_ || predicted >= classes_) throw ArgumentError("class index out of range");
  return counts_[truth * classes_ + predicted];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (std::size_t k = 0; k < classes_; ++k) s += counts_[k * classes_ + k];
  return s;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t k = 0; k < classes_; ++k) s += at(truth, k);
  return s;
}

double ConfusionMatrix::accuracy() const {
  const auto t = total();
  return t == 0 ? kNaN : static_cast<double>(trace()) / static_cast<double>(t);
}

std::string ConfusionMatrix::to_csv(const std::vector<std::string>& class_names) const {
  auto name = [&](std::size_t k) {
    return k < class_names.size() ? class_names[k] : "class" + std::to_string(k);
  };
  std::ostringstream os;
  os << "truth";
  for (std::size_t k = 0; k < classes_; ++k) os << ',' << name(k);
  os << '\n';
  for (std::size_t r = 0; r < classes_; ++r) {
    os << name(r);
    for (std::size_t c = 0; c < classes_; ++c) os << ',' << at(r, c);
    os << '\n';
  }
  return os.str();
}

double SourceTally::accuracy() const {
  return total == 0 ? kNaN : static_cast<double>(correct) / static_cast<double>(total);
}

EvalResult evaluate(const MBModel& model, const Dataset& data, Split split) {
  return evaluate_impl(model, data, split, std::nullopt);
}

Dataset dataset_for_seed(const Dataset& data, std::uint64_t seed, bool pin_splits) {
  if (pin_splits) return data;
  Dataset d = data;
  const std::size_t classes = d.manifest.classes;
  const auto base = d.manifest.base_dir;
  d.manifest = split_dataset(d.manifest.records, seed);
  d.manifest.classes = std::max(classes, d.manifest.classes);
  d.manifest.base_dir = base;
  return d;
}

// ---------------------------------------------------------------------------

std::string GridResult::runs_csv() const {
  std::ostringstream os;
  os << "branches,units,seed,test_acc\n";
  for (const auto& r : runs) {
    os << r.branches << ',' << r.units << ',' << r.seed << ','
       << (r.failed ? std::string("failed") : format_double(r.test_acc)) << '\n';
  }
  return os.str();
}

std::string GridResult::cells_csv() const {
  std::ostringstream os;
  os << "branches,units,mean,std\n";
  for (const auto& c : cells) {
    os << c.branches << ',' << c.units << ',';
    if (c.failed()) {
      os << "failed,failed\n";
    } else {
      os << format_double(c.mean) << ',' << format_double(c.std) << '\n';
    }
  }
  return os.str();
}

const GridCell& GridResult::cell(std::size_t branches, std::size_t units) const {
  for (const auto& c : cells) {
    if (c.branches == branches && c.units == units) return c;
  }
  throw ArgumentError("no grid cell (" + std::to_string(branches) + "," + std::to_string(units) + ")");
}

GridResult ablation_grid(const std::vector<std::size_t>& branch_values,
                         const std::vector<std::size_t>& unit_values,
                         const std::vector<std::uint64_t>& seeds, const Dataset& data,
                         const ModelConfig& base, const TrainConfig& tc,
                         const std::optional<Backbone>& backbone) {
  if (branch_values.empty() || unit_values.empty() || seeds.empty()) {
    throw ArgumentError("ablation grid needs nonempty branch, unit and seed lists");
  }
  tc.validate();
  const FeatureShape fshape = backbone ? backbone->output_shape()
                                       : FeatureShape{data.input(0).dim(0), data.input(0).dim(1),
                                                      data.input(0).dim(2)};
  GridResult result;
  for (auto b : branch_values) {
    for (auto u : unit_values) {
      for (auto s : seeds) result.runs.push_back({b, u, s, kNaN, false, {}});
    }
  }

  TrainConfig run_tc = tc;
  run_tc.on_epoch = nullptr;
  run_tc.report_every = 0;
  const auto n = static_cast<std::ptrdiff_t>(result.runs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto& run = result.runs[static_cast<std::size_t>(i)];
    try {
      ModelConfig cfg = base;
      cfg.branches = run.branches;
      cfg.units = run.units;
      cfg.seed = run.seed;
      MBModel model = model_build(cfg, fshape, backbone);
      const Dataset d = dataset_for_seed(data, run.seed, tc.pin_splits);
      run.test_acc = train(model, d, run_tc, run.seed).history.test_acc;
    } catch (const DivergenceError& e) {
      run.failed = true;
      run.error = e.what();
    }
  }

  for (auto b : branch_values) {
    for (auto u : unit_values) {
      GridCell cell{b, u, kNaN, kNaN, 0, 0};
      std::vector<double> accs;
      for (const auto& r : result.runs) {
        if (r.branches != b || r.units != u) continue;
        if (r.failed) {
          ++cell.failures;
        } else {
          accs.push_back(r.test_acc);
        }
      }
      cell.runs = accs.size();
      if (!accs.empty()) {
        cell.mean = mean_of(accs);
        cell.std = sample_std(accs);
      }
      result.cells.push_back(cell);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

double median(std::vector<double> values) {
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double CompareResult::median(HeadKind head) const {
  std::vector<double> v;
  for (const auto& r : runs) {
    if (r.head == head) v.push_back(r.test_acc);
  }
  return mbrbf::median(std::move(v));
}

double CompareResult::median_source(HeadKind head, const std::string& source) const {
  std::vector<double> v;
  for (const auto& r : runs) {
    if (r.head != head) continue;
    const auto it = r.per_source.find(source);
    if (it != r.per_source.end() && it->second.total > 0) v.push_back(it->second.accuracy());
  }
  return mbrbf::median(std::move(v));
}

double CompareResult::minority_accuracy(HeadKind head) const {
  std::size_t correct = 0, total = 0;
  for (const auto& r : runs) {
    if (r.head != head) continue;
    const SourceTally* minority = nullptr;
    for (const auto& s : sources) {
      const auto it = r.per_source.find(s);
      if (it == r.per_source.end() || it->second.total == 0) continue;
      if (!minority || it->second.total < minority->total) minority = &it->second;
    }
    if (minority) {
      correct += minority->correct;
      total += minority->total;
    }
  }
  return total == 0 ? kNaN : static_cast<double>(correct) / static_cast<double>(total);
}

std::string CompareResult::csv() const {
  std::ostringstream os;
  os << "head,seed,test_acc";
  for (const auto& s : sources) os << ",acc_" << s;
  os << '\n';
  for (const auto& r : runs) {
    os << (r.head == HeadKind::rbf ? "mb-rbf" : "mb-cnn") << ',' << r.seed << ','
       << format_double(r.test_acc);
    for (const auto& s : sources) {
      const auto it = r.per_source.find(s);
      os << ',' << format_double(it == r.per_source.end() ? kNaN : it->second.accuracy());
    }
    os << '\n';
  }
  for (auto head : {HeadKind::rbf, HeadKind::dense}) {
    os << (head == HeadKind::rbf ? "mb-rbf" : "mb-cnn") << ",median," << format_double(median(head));
    for (const auto& s : sources) os << ',' << format_double(median_source(head, s));
    os << '\n';
  }
  return os.str();
}

CompareResult compare_heads(const Dataset& data, const ModelConfig& cfg, const TrainConfig& tc,
                            const std::optional<Backbone>& backbone) {
  tc.validate();
  const FeatureShape fshape = backbone ? backbone->output_shape()
                                       : FeatureShape{data.input(0).dim(0), data.input(0).dim(1),
                                                      data.input(0).dim(2)};
  CompareResult result;
  result.sources = data.manifest.sources();
  for (auto head : {HeadKind::rbf, HeadKind::dense}) {
    for (auto s : tc.seeds) result.runs.push_back({head, s, kNaN, {}});
  }
  TrainConfig run_tc = tc;
  run_tc.on_epoch = nullptr;
  run_tc.report_every = 0;
  const auto n = static_cast<std::ptrdiff_t>(result.runs.size());
  std::vector<std::exception_ptr> errors(result.runs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto& run = result.runs[static_cast<std::size_t>(i)];
    try {
      ModelConfig mc = cfg;
      mc.head_kind = run.head;
      mc.seed = run.seed;
      MBModel model = model_build(mc, fshape, backbone);
      const Dataset d = dataset_for_seed(data, run.seed, tc.pin_splits);
      train(model, d, run_tc, run.seed);
      const auto eval = evaluate(model, d, Split::test);
      run.test_acc = eval.accuracy;
      run.per_source = eval.per_source;
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return result;
}

}  // namespace mbrbf
