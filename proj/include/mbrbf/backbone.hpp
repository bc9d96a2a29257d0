#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mbrbf/params.hpp"
#include "mbrbf/tensor.hpp"

namespace mbrbf {

/// Channels x height x width of a feature block or image.
struct FeatureShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  Shape shape() const { return {channels, height, width}; }
  std::size_t size() const { return channels * height * width; }
  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

std::string to_string(const FeatureShape& s);
/// Parses "C,H,W" (or "CxHxW").
FeatureShape parse_feature_shape(const std::string& text);

/// Activations of the backbone's last convolution for one sample.
struct FeatureBlock {
  Tensor tensor;
  std::string sample_id;
};

struct ConvBlockSpec {
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t pool = 2;
  friend bool operator==(const ConvBlockSpec&, const ConvBlockSpec&) = default;
};

struct BackboneConfig {
  FeatureShape input_shape{1, 48, 48};
  std::vector<ConvBlockSpec> blocks{{16, 3, 2}, {32, 3, 2}, {64, 3, 2}};
  bool frozen = true;
  std::uint64_t seed = 0;
};

/// "16:3:2,32:3:2" <-> blocks (out_channels:kernel:pool).
std::string format_blocks(const std::vector<ConvBlockSpec>& blocks);
std::vector<ConvBlockSpec> parse_blocks(const std::string& text);

/// Small convolutional feature extractor: blocks of same-padded convolution,
/// ReLU and max-pooling. Stands in for a large pretrained network.
class Backbone {
 public:
  struct Cache {
    std::vector<Tensor> block_inputs;
    std::vector<Tensor> activations;               // post-ReLU, pre-pool
    std::vector<std::vector<std::size_t>> argmax;  // pool routing per block
  };

  explicit Backbone(BackboneConfig cfg);

  const BackboneConfig& config() const { return cfg_; }
  FeatureShape output_shape() const { return output_shape_; }
  bool frozen() const { return cfg_.frozen; }
  void set_frozen(bool frozen) { cfg_.frozen = frozen; }

  Tensor forward(const Tensor& image, Cache* cache = nullptr) const;
  /// Gradients for every backbone parameter, in parameters() order.
  GradientSet backward(const Cache& cache, const Tensor& grad_out) const;

  std::vector<ParamRef> parameters();
  std::vector<std::pair<std::string, const Tensor*>> parameters() const;

  std::vector<Tensor>& weights() { return weights_; }
  std::vector<Tensor>& biases() { return biases_; }
  const std::vector<Tensor>& weights() const { return weights_; }
  const std::vector<Tensor>& biases() const { return biases_; }

 private:
  BackboneConfig cfg_;
  FeatureShape output_shape_;
  std::vector<Tensor> weights_;  // out x in x k x k
  std::vector<Tensor> biases_;   // out
};

/// Validates the configuration and initializes weights from cfg.seed
/// (He-scaled uniform, zero biases).
Backbone backbone_init(const BackboneConfig& cfg);
FeatureBlock backbone_forward(const Backbone& bb, const Tensor& image, std::string sample_id = {});

/// Reads a rank-3 .mbrt file; the sample id is the file stem.
FeatureBlock load_feature_block(const std::filesystem::path& path);

}  // namespace mbrbf
