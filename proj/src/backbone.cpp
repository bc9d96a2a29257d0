#include "mbrbf/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mbrbf/errors.hpp"
#include "mbrbf/kernels.hpp"
#include "mbrbf/rng.hpp"
#include "mbrbf/tensor_io.hpp"

namespace mbrbf {

namespace {

std::vector<std::string> split_on(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, sep)) out.push_back(item);
  return out;
}

std::size_t parse_count(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size() || v <= 0) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError(std::string("invalid ") + what + ": '" + s + "'");
  }
}

}  // namespace

std::string to_string(const FeatureShape& s) {
  return std::to_string(s.channels) + "," + std::to_string(s.height) + "," +
         std::to_string(s.width);
}

FeatureShape parse_feature_shape(const std::string& text) {
  std::string t = text;
  for (auto& c : t) {
    if (c == 'x') c = ',';
  }
  const auto parts = split_on(t, ',');
  if (parts.size() != 3) throw ConfigError("feature shape must be C,H,W: '" + text + "'");
  return {parse_count(parts[0], "channels"), parse_count(parts[1], "height"),
          parse_count(parts[2], "width")};
}

std::string format_blocks(const std::vector<ConvBlockSpec>& blocks) {
  std::string out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(blocks[i].out_channels) + ':' + std::to_string(blocks[i].kernel) + ':' +
           std::to_string(blocks[i].pool);
  }
  return out;
}

std::vector<ConvBlockSpec> parse_blocks(const std::string& text) {
  std::vector<ConvBlockSpec> blocks;
  for (const auto& item : split_on(text, ',')) {
    const auto f = split_on(item, ':');
    if (f.size() != 3) throw ConfigError("conv block must be out:kernel:pool, got '" + item + "'");
    blocks.push_back({parse_count(f[0], "out_channels"), parse_count(f[1], "kernel"),
                      parse_count(f[2], "pool")});
  }
  return blocks;
}

Backbone::Backbone(BackboneConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.blocks.empty()) throw ConfigError("backbone needs at least one conv block");
  FeatureShape s = cfg_.input_shape;
  if (s.channels == 0 || s.height == 0 || s.width == 0) {
    throw ConfigError("backbone input shape must be positive");
  }
  for (std::size_t i = 0; i < cfg_.blocks.size(); ++i) {
    const auto& b = cfg_.blocks[i];
    if (b.out_channels == 0 || b.pool == 0) throw ConfigError("conv block fields must be positive");
    if (b.kernel % 2 == 0) throw ConfigError("conv kernel size must be odd");
    if (b.pool > s.height || b.pool > s.width) {
      throw ConfigError("block " + std::to_string(i) + " pools " + std::to_string(b.pool) +
                        "x over a " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                        " map");
    }
    const std::size_t fan_in = s.channels * b.kernel * b.kernel;
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in));
    Rng rng(derive_seed(cfg_.seed, i));
    Tensor w({b.out_channels, s.channels, b.kernel, b.kernel});
    for (auto& v : w.data()) v = rng.uniform(-a, a);
    weights_.push_back(std::move(w));
    biases_.emplace_back(Shape{b.out_channels});
    s = {b.out_channels, s.height / b.pool, s.width / b.pool};
  }
  output_shape_ = s;
}

Tensor Backbone::forward(const Tensor& image, Cache* cache) const {
  if (image.shape() != cfg_.input_shape.shape()) {
    throw ShapeError("backbone expects input " + shape_string(cfg_.input_shape.shape()) +
                     ", got " + shape_string(image.shape()));
  }
  if (cache) *cache = Cache{};
  Tensor x = image;
  for (std::size_t i = 0; i < cfg_.blocks.size(); ++i) {
    const auto& b = cfg_.blocks[i];
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    Tensor y({b.out_channels, H, W});
    kernels::conv2d_same(x.data(), weights_[i].data(), biases_[i].data(), y.data(),
                         {C, b.out_channels, H, W, b.kernel});
    for (auto& v : y.data()) v = std::max(v, 0.0);

    const std::size_t Ho = H / b.pool, Wo = W / b.pool;
    Tensor pooled({b.out_channels, Ho, Wo});
    std::vector<std::size_t> route(pooled.size());
    for (std::size_t c = 0; c < b.out_channels; ++c) {
      for (std::size_t oy = 0; oy < Ho; ++oy) {
        for (std::size_t ox = 0; ox < Wo; ++ox) {
          std::size_t best = (c * H + oy * b.pool) * W + ox * b.pool;
          for (std::size_t py = 0; py < b.pool; ++py) {
            for (std::size_t px = 0; px < b.pool; ++px) {
              const std::size_t idx = (c * H + oy * b.pool + py) * W + ox * b.pool + px;
              if (y[idx] > y[best]) best = idx;
            }
          }
          const std::size_t o = (c * Ho + oy) * Wo + ox;
          pooled[o] = y[best];
          route[o] = best;
        }
      }
    }
    if (cache) {
      cache->block_inputs.push_back(std::move(x));
      cache->activations.push_back(std::move(y));
      cache->argmax.push_back(std::move(route));
    }
    x = std::move(pooled);
  }
  return x;
}

GradientSet Backbone::backward(const Cache& cache, const Tensor& grad_out) const {
  if (cache.block_inputs.size() != cfg_.blocks.size()) {
    throw InternalError("backbone cache does not match this backbone");
  }
  if (grad_out.shape() != output_shape_.shape()) throw ShapeError("backbone grad shape mismatch");

  std::vector<Tensor> gw(cfg_.blocks.size()), gb(cfg_.blocks.size());
  Tensor g = grad_out;
  for (std::size_t i = cfg_.blocks.size(); i-- > 0;) {
    const auto& b = cfg_.blocks[i];
    const Tensor& act = cache.activations[i];
    const Tensor& in = cache.block_inputs[i];
    Tensor g_act(act.shape());
    const auto& route = cache.argmax[i];
    for (std::size_t o = 0; o < route.size(); ++o) g_act[route[o]] += g[o];
    for (std::size_t k = 0; k < act.size(); ++k) {
      if (!(act[k] > 0.0)) g_act[k] = 0.0;
    }
    Tensor g_in(in.shape());
    gw[i] = Tensor(weights_[i].shape());
    gb[i] = Tensor(biases_[i].shape());
    kernels::conv2d_same_backward(in.data(), weights_[i].data(), g_act.data(), g_in.data(),
                                  gw[i].data(), gb[i].data(),
                                  {in.dim(0), b.out_channels, in.dim(1), in.dim(2), b.kernel});
    g = std::move(g_in);
  }
  GradientSet set;
  for (std::size_t i = 0; i < cfg_.blocks.size(); ++i) {
    set.add("backbone.conv" + std::to_string(i) + ".weights", std::move(gw[i]));
    set.add("backbone.conv" + std::to_string(i) + ".bias", std::move(gb[i]));
  }
  return set;
}

std::vector<ParamRef> Backbone::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.push_back({"backbone.conv" + std::to_string(i) + ".weights", &weights_[i]});
    out.push_back({"backbone.conv" + std::to_string(i) + ".bias", &biases_[i]});
  }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> Backbone::parameters() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.emplace_back("backbone.conv" + std::to_string(i) + ".weights", &weights_[i]);
    out.emplace_back("backbone.conv" + std::to_string(i) + ".bias", &biases_[i]);
  }
  return out;
}

Backbone backbone_init(const BackboneConfig& cfg) { return Backbone(cfg); }

FeatureBlock backbone_forward(const Backbone& bb, const Tensor& image, std::string sample_id) {
  return {bb.forward(image), std::move(sample_id)};
}

FeatureBlock load_feature_block(const std::filesystem::path& path) {
  Tensor t = read_tensor(path);
  if (t.rank() != 3) {
    throw FormatError("feature block " + path.string() + " has rank " + std::to_string(t.rank()) +
                      ", expected 3");
  }
  return {std::move(t), path.stem().string()};
}

}  // namespace mbrbf
