#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mbrbf/backbone.hpp"
#include "mbrbf/layers.hpp"
#include "mbrbf/params.hpp"
#include "mbrbf/tensor.hpp"

namespace mbrbf {

enum class HeadKind { rbf, dense };
enum class FeatureSource { backbone, ingested };

std::string to_string(HeadKind kind);
std::string to_string(FeatureSource source);
HeadKind parse_head_kind(const std::string& text);
FeatureSource parse_feature_source(const std::string& text);

struct ModelConfig {
  HeadKind head_kind = HeadKind::rbf;
  std::size_t branches = 8;
  std::size_t units = 4;
  std::size_t classes = 7;
  double sigma_init = 0.0528;
  bool train_sigma = true;
  FeatureSource feature_source = FeatureSource::ingested;
  std::uint64_t seed = 0;
  /// Centers are drawn i.i.d. uniform in [center_min, center_max).
  double center_min = 0.0;
  double center_max = 1.0;
  /// Rectify the reduced maps before the branches.
  bool reduce_relu = false;

  void validate() const;
  std::size_t concat_width() const { return branches * units; }
};

/// Backbone (optional) -> 1x1 reduction to B maps -> B branches over the
/// flattened H*W maps -> concatenation (branch-major, unit-minor) -> softmax.
class MBModel {
 public:
  MBModel(ModelConfig cfg, FeatureShape feature_shape, std::optional<Backbone> backbone);

  const ModelConfig& config() const { return cfg_; }
  /// Shape of the block entering the reduction layer.
  FeatureShape feature_shape() const { return feature_shape_; }
  /// Shape of the tensor model_forward accepts.
  Shape input_shape() const;
  std::size_t branch_dim() const { return feature_shape_.height * feature_shape_.width; }

  ReduceConv reduce;
  std::vector<RBFBranch> rbf_branches;
  std::vector<DenseReLU> dense_branches;
  SoftmaxClassifier classifier;
  std::optional<Backbone> backbone;
  /// Centers as drawn at construction; kept for visualization.
  std::vector<Tensor> initial_centers;

  /// Parameters the optimizer may touch: frozen backbone weights and, when
  /// train_sigma is off, the radii are left out.
  std::vector<ParamRef> trainable_parameters();
  /// Every stored tensor, trainable or not, for checkpoints.
  std::vector<std::pair<std::string, const Tensor*>> state() const;
  std::vector<ParamRef> mutable_state();

  /// Invalidates forward caches taken before a parameter update.
  void bump_generation() { ++generation_; }
  std::uint64_t generation() const { return generation_; }

 private:
  ModelConfig cfg_;
  FeatureShape feature_shape_;
  std::uint64_t generation_ = 0;
};

MBModel model_build(const ModelConfig& cfg, FeatureShape feature_shape,
                    std::optional<Backbone> backbone = std::nullopt);

struct ForwardCache {
  const MBModel* model = nullptr;
  std::uint64_t generation = 0;
  std::optional<Backbone::Cache> backbone;
  Tensor fmap;
  Tensor reduced_pre;
  Tensor reduced;
  std::vector<double> concat;
  std::vector<double> logits;
};

struct ForwardResult {
  std::vector<double> probs;
  ForwardCache cache;
};

struct BackwardResult {
  double loss = 0.0;
  GradientSet grads;
};

/// `input` is a feature block for ingested features, or an image when the
/// model owns a backbone.
ForwardResult model_forward(const MBModel& m, const Tensor& input);
ForwardResult model_forward(const MBModel& m, const FeatureBlock& fb);
/// Starts at the reduction layer with an already extracted feature block.
/// Backward from such a cache never reaches the backbone, so this is only
/// valid for models without a backbone or with a frozen one.
ForwardResult model_forward_features(const MBModel& m, const Tensor& fmap);
BackwardResult model_backward(const MBModel& m, const ForwardCache& cache, std::size_t label);
std::size_t predict(const MBModel& m, const Tensor& input);

}  // namespace mbrbf
