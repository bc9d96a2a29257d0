#include "mbrbf/model.hpp"

#include <algorithm>
#include <cmath>

#include "mbrbf/errors.hpp"
#include "mbrbf/rng.hpp"

namespace mbrbf {

namespace {

// Stream tags for derive_seed; the reduction and classifier streams do not
// depend on the head kind, so matched RBF/dense models share them.
constexpr std::uint64_t kReduceStream = 1;
constexpr std::uint64_t kClassifierStream = 2;
constexpr std::uint64_t kBranchStream = 1000;

Tensor uniform_tensor(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

std::string branch_name(std::size_t b) { return "branch" + std::to_string(b); }

}  // namespace

std::string to_string(HeadKind kind) { return kind == HeadKind::rbf ? "rbf" : "dense"; }

std::string to_string(FeatureSource source) {
  return source == FeatureSource::backbone ? "backbone" : "ingested";
}

HeadKind parse_head_kind(const std::string& text) {
  if (text == "rbf") return HeadKind::rbf;
  if (text == "dense" || text == "cnn") return HeadKind::dense;
  throw ConfigError("unknown head kind '" + text + "' (expected rbf or dense)");
}

FeatureSource parse_feature_source(const std::string& text) {
  if (text == "backbone") return FeatureSource::backbone;
  if (text == "ingested") return FeatureSource::ingested;
  throw ConfigError("unknown feature source '" + text + "' (expected backbone or ingested)");
}

void ModelConfig::validate() const {
  if (branches == 0) throw ConfigError("branches must be positive");
  if (units == 0) throw ConfigError("units per branch must be positive");
  if (classes < 2) throw ConfigError("need at least 2 classes");
  if (!(sigma_init > 0.0) || !std::isfinite(sigma_init)) {
    throw ConfigError("sigma_init must be a positive finite number");
  }
  if (!(center_min < center_max) || !std::isfinite(center_min) || !std::isfinite(center_max)) {
    throw ConfigError("center init range must satisfy center_min < center_max");
  }
}

MBModel::MBModel(ModelConfig cfg, FeatureShape feature_shape, std::optional<Backbone> bb)
    : reduce(Tensor({1, 1}), Tensor({1})),
      classifier(Tensor({2, 1}), Tensor({2})),
      backbone(std::move(bb)),
      cfg_(cfg),
      feature_shape_(feature_shape) {
  cfg_.validate();
  if (cfg_.feature_source == FeatureSource::backbone) {
    if (!backbone) throw ConfigError("feature_source=backbone requires a backbone");
    if (backbone->output_shape() != feature_shape_) {
      throw ConfigError("backbone output " + to_string(backbone->output_shape()) +
                        " differs from feature shape " + to_string(feature_shape_));
    }
  } else if (backbone) {
    throw ConfigError("feature_source=ingested must not carry a backbone");
  }
  if (feature_shape_.size() == 0) throw ConfigError("feature shape must be positive");

  const std::size_t B = cfg_.branches, U = cfg_.units, C = feature_shape_.channels;
  const std::size_t d = branch_dim();

  Rng reduce_rng(derive_seed(cfg_.seed, kReduceStream));
  const double ra = 1.0 / std::sqrt(static_cast<double>(C));
  reduce = ReduceConv(uniform_tensor({B, C}, reduce_rng, -ra, ra), Tensor({B}));

  for (std::size_t b = 0; b < B; ++b) {
    Rng rng(derive_seed(cfg_.seed, kBranchStream + b));
    if (cfg_.head_kind == HeadKind::rbf) {
      Tensor centers = uniform_tensor({U, d}, rng, cfg_.center_min, cfg_.center_max);
      initial_centers.push_back(centers);
      rbf_branches.emplace_back(std::move(centers), Tensor({U}, std::log(cfg_.sigma_init)));
    } else {
      const double a = std::sqrt(6.0 / static_cast<double>(d));
      dense_branches.emplace_back(uniform_tensor({U, d}, rng, -a, a), Tensor({U}));
    }
  }

  Rng clf_rng(derive_seed(cfg_.seed, kClassifierStream));
  const double ca = 1.0 / std::sqrt(static_cast<double>(B * U));
  classifier = SoftmaxClassifier(uniform_tensor({cfg_.classes, B * U}, clf_rng, -ca, ca),
                                 Tensor({cfg_.classes}));
}

Shape MBModel::input_shape() const {
  if (backbone) return backbone->config().input_shape.shape();
  return feature_shape_.shape();
}

std::vector<ParamRef> MBModel::trainable_parameters() {
  std::vector<ParamRef> out;
  out.push_back({"reduce.weights", &reduce.weights});
  out.push_back({"reduce.bias", &reduce.bias});
  for (std::size_t b = 0; b < rbf_branches.size(); ++b) {
    out.push_back({branch_name(b) + ".centers", &rbf_branches[b].centers});
    if (cfg_.train_sigma) out.push_back({branch_name(b) + ".log_radii", &rbf_branches[b].log_radii});
  }
  for (std::size_t b = 0; b < dense_branches.size(); ++b) {
    out.push_back({branch_name(b) + ".weights", &dense_branches[b].weights});
    out.push_back({branch_name(b) + ".bias", &dense_branches[b].bias});
  }
  out.push_back({"classifier.weights", &classifier.weights});
  out.push_back({"classifier.bias", &classifier.bias});
  if (backbone && !backbone->frozen()) {
    for (auto& p : backbone->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<ParamRef> MBModel::mutable_state() {
  std::vector<ParamRef> out;
  out.push_back({"reduce.weights", &reduce.weights});
  out.push_back({"reduce.bias", &reduce.bias});
  for (std::size_t b = 0; b < rbf_branches.size(); ++b) {
    out.push_back({branch_name(b) + ".centers", &rbf_branches[b].centers});
    out.push_back({branch_name(b) + ".log_radii", &rbf_branches[b].log_radii});
  }
  for (std::size_t b = 0; b < initial_centers.size(); ++b) {
    out.push_back({"init." + branch_name(b) + ".centers", &initial_centers[b]});
  }
  for (std::size_t b = 0; b < dense_branches.size(); ++b) {
    out.push_back({branch_name(b) + ".weights", &dense_branches[b].weights});
    out.push_back({branch_name(b) + ".bias", &dense_branches[b].bias});
  }
  out.push_back({"classifier.weights", &classifier.weights});
  out.push_back({"classifier.bias", &classifier.bias});
  if (backbone) {
    for (auto& p : backbone->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> MBModel::state() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (const auto& p : const_cast<MBModel*>(this)->mutable_state()) {
    out.emplace_back(p.name, p.tensor);
  }
  return out;
}

MBModel model_build(const ModelConfig& cfg, FeatureShape feature_shape,
                    std::optional<Backbone> backbone) {
  return MBModel(cfg, feature_shape, std::move(backbone));
}

namespace {

void head_forward(const MBModel& m, ForwardResult& r) {
  ForwardCache& c = r.cache;
  if (c.fmap.shape() != m.feature_shape().shape()) {
    throw ShapeError("model expects feature block " + shape_string(m.feature_shape().shape()) +
                     ", got " + shape_string(c.fmap.shape()));
  }
  c.reduced_pre = reduce_conv_forward(m.reduce, c.fmap);
  c.reduced = c.reduced_pre;
  if (m.config().reduce_relu) {
    for (auto& v : c.reduced.data()) v = std::max(v, 0.0);
  }

  const std::size_t B = m.config().branches, U = m.config().units;
  c.concat.resize(B * U);
  for (std::size_t b = 0; b < B; ++b) {
    const auto x = c.reduced.row(b);
    const auto h = m.config().head_kind == HeadKind::rbf ? rbf_forward(m.rbf_branches[b], x)
                                                         : dense_relu_forward(m.dense_branches[b], x);
    std::copy(h.begin(), h.end(), c.concat.begin() + static_cast<std::ptrdiff_t>(b * U));
  }
  c.logits = classifier_logits(m.classifier, c.concat);
  r.probs = softmax(c.logits);
}

}  // namespace

ForwardResult model_forward(const MBModel& m, const Tensor& input) {
  ForwardResult r;
  r.cache.model = &m;
  r.cache.generation = m.generation();
  if (m.backbone) {
    r.cache.backbone.emplace();
    r.cache.fmap = m.backbone->forward(input, &*r.cache.backbone);
  } else {
    r.cache.fmap = input;
  }
  head_forward(m, r);
  return r;
}

ForwardResult model_forward_features(const MBModel& m, const Tensor& fmap) {
  ForwardResult r;
  r.cache.model = &m;
  r.cache.generation = m.generation();
  r.cache.fmap = fmap;
  head_forward(m, r);
  return r;
}

ForwardResult model_forward(const MBModel& m, const FeatureBlock& fb) {
  return model_forward(m, fb.tensor);
}

BackwardResult model_backward(const MBModel& m, const ForwardCache& c, std::size_t label) {
  if (c.model != &m || c.generation != m.generation()) {
    throw InternalError("forward cache is stale or belongs to another model");
  }
  const std::size_t B = m.config().branches, U = m.config().units;
  BackwardResult out;
  const auto sm = softmax_cross_entropy_logits(c.logits, label);
  out.loss = sm.loss;
  auto clf = classifier_backward(m.classifier, c.concat, sm.grad_logits);

  Tensor grad_reduced(c.reduced.shape());
  std::vector<std::pair<std::string, Tensor>> branch_grads;
  for (std::size_t b = 0; b < B; ++b) {
    const auto x = c.reduced.row(b);
    const std::span<const double> gh(clf.features.data() + b * U, U);
    auto gx = grad_reduced.row(b);
    if (m.config().head_kind == HeadKind::rbf) {
      auto g = rbf_backward(m.rbf_branches[b], x, gh);
      std::copy(g.x.begin(), g.x.end(), gx.begin());
      branch_grads.emplace_back(branch_name(b) + ".centers", std::move(g.centers));
      if (m.config().train_sigma) {
        branch_grads.emplace_back(branch_name(b) + ".log_radii", std::move(g.log_radii));
      }
    } else {
      auto g = dense_relu_backward(m.dense_branches[b], x, gh);
      std::copy(g.x.begin(), g.x.end(), gx.begin());
      branch_grads.emplace_back(branch_name(b) + ".weights", std::move(g.weights));
      branch_grads.emplace_back(branch_name(b) + ".bias", std::move(g.bias));
    }
  }
  if (m.config().reduce_relu) {
    for (std::size_t k = 0; k < grad_reduced.size(); ++k) {
      if (!(c.reduced_pre[k] > 0.0)) grad_reduced[k] = 0.0;
    }
  }
  auto rg = reduce_conv_backward(m.reduce, c.fmap, grad_reduced);

  out.grads.add("reduce.weights", std::move(rg.weights));
  out.grads.add("reduce.bias", std::move(rg.bias));
  for (auto& [name, t] : branch_grads) out.grads.add(name, std::move(t));
  out.grads.add("classifier.weights", std::move(clf.weights));
  out.grads.add("classifier.bias", std::move(clf.bias));
  if (m.backbone && !m.backbone->frozen()) {
    if (!c.backbone) throw InternalError("forward cache lacks backbone activations");
    auto bg = m.backbone->backward(*c.backbone, rg.fmap);
    for (const auto& e : bg.entries()) out.grads.add(e.name, e.tensor);
  }
  return out;
}

std::size_t predict(const MBModel& m, const Tensor& input) {
  // Logits rather than probs: exponentiation can merge nearly tied classes.
  return argmax(model_forward(m, input).cache.logits);
}

}  // namespace mbrbf
