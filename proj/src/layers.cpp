#include "mbrbf/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mbrbf/errors.hpp"
#include "mbrbf/kernels.hpp"

namespace mbrbf {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

void require_matrix_and_vector(const Tensor& m, const Tensor& v, const char* layer) {
  require(m.rank() == 2, std::string(layer) + ": weights must be a matrix");
  require(v.rank() == 1 && v.dim(0) == m.dim(0),
          std::string(layer) + ": vector length must equal matrix rows");
  if (!m.all_finite() || !v.all_finite()) {
    throw ArgumentError(std::string(layer) + ": parameters must be finite");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

RBFBranch::RBFBranch(Tensor c, Tensor r) : centers(std::move(c)), log_radii(std::move(r)) {
  require_matrix_and_vector(centers, log_radii, "RBFBranch");
}

double RBFBranch::radius(std::size_t unit) const { return std::exp(log_radii[unit]); }

std::vector<double> rbf_forward(const RBFBranch& branch, std::span<const double> x) {
  if (x.size() != branch.dim()) {
    throw ShapeError("rbf_forward: input length " + std::to_string(x.size()) + ", branch expects " +
                     std::to_string(branch.dim()));
  }
  std::vector<double> h(branch.units());
  kernels::sq_distances(branch.centers.data(), x, h);
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double s2 = std::exp(2.0 * branch.log_radii[i]);
    if (!(s2 >= kMinRadiusSquared) || !std::isfinite(s2)) {
      throw DivergenceError("rbf unit " + std::to_string(i) + " radius^2 = " + std::to_string(s2) +
                            " outside the representable range");
    }
    h[i] = std::exp(-h[i] / (2.0 * s2));
  }
  return h;
}

RBFGradients rbf_backward(const RBFBranch& branch, std::span<const double> x,
                          std::span<const double> grad_h) {
  if (grad_h.size() != branch.units()) throw ShapeError("rbf_backward: grad_h length mismatch");
  const auto h = rbf_forward(branch, x);
  const std::size_t U = branch.units();
  const std::size_t d = branch.dim();

  RBFGradients g{std::vector<double>(d, 0.0), Tensor({U, d}), Tensor({U})};
  for (std::size_t i = 0; i < U; ++i) {
    const double s2 = std::exp(2.0 * branch.log_radii[i]);
    const double scale = grad_h[i] * h[i] / s2;
    const auto mu = branch.centers.row(i);
    auto gmu = g.centers.row(i);
    double dist2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = x[j] - mu[j];
      dist2 += diff * diff;
      gmu[j] = scale * diff;
      g.x[j] -= scale * diff;
    }
    g.log_radii[i] = scale * dist2;
  }
  return g;
}

// ---------------------------------------------------------------------------

ReduceConv::ReduceConv(Tensor w, Tensor b) : weights(std::move(w)), bias(std::move(b)) {
  require_matrix_and_vector(weights, bias, "ReduceConv");
}

Tensor reduce_conv_forward(const ReduceConv& rc, const Tensor& fmap) {
  if (fmap.rank() != 3 || fmap.dim(0) != rc.channels()) {
    throw ShapeError("reduce_conv_forward: expected " + std::to_string(rc.channels()) +
                     " channels, got shape " + shape_string(fmap.shape()));
  }
  const std::size_t H = fmap.dim(1), W = fmap.dim(2);
  Tensor out({rc.filters(), H, W});
  kernels::channel_mix(rc.weights.data(), rc.bias.data(), fmap.data(), out.data(),
                       {rc.filters(), rc.channels(), H * W});
  return out;
}

ReduceConvGradients reduce_conv_backward(const ReduceConv& rc, const Tensor& fmap,
                                         const Tensor& grad_out) {
  if (fmap.rank() != 3 || fmap.dim(0) != rc.channels()) {
    throw ShapeError("reduce_conv_backward: feature map shape " + shape_string(fmap.shape()));
  }
  const std::size_t H = fmap.dim(1), W = fmap.dim(2);
  if (grad_out.shape() != Shape{rc.filters(), H, W}) {
    throw ShapeError("reduce_conv_backward: grad_out shape " + shape_string(grad_out.shape()));
  }
  ReduceConvGradients g{Tensor(fmap.shape()), Tensor(rc.weights.shape()), Tensor(rc.bias.shape())};
  kernels::channel_mix_backward(rc.weights.data(), fmap.data(), grad_out.data(), g.fmap.data(),
                                g.weights.data(), g.bias.data(),
                                {rc.filters(), rc.channels(), H * W});
  return g;
}

// ---------------------------------------------------------------------------

DenseReLU::DenseReLU(Tensor w, Tensor b) : weights(std::move(w)), bias(std::move(b)) {
  require_matrix_and_vector(weights, bias, "DenseReLU");
}

std::vector<double> dense_preactivation(const DenseReLU& layer, std::span<const double> x) {
  if (x.size() != layer.dim()) throw ShapeError("dense_relu: input length mismatch");
  std::vector<double> z(layer.units());
  for (std::size_t u = 0; u < z.size(); ++u) {
    const auto w = layer.weights.row(u);
    double acc = layer.bias[u];
    for (std::size_t j = 0; j < x.size(); ++j) acc += w[j] * x[j];
    z[u] = acc;
  }
  return z;
}

std::vector<double> dense_relu_forward(const DenseReLU& layer, std::span<const double> x) {
  auto z = dense_preactivation(layer, x);
  for (auto& v : z) v = std::max(v, 0.0);
  return z;
}

DenseGradients dense_relu_backward(const DenseReLU& layer, std::span<const double> x,
                                   std::span<const double> grad_out) {
  if (grad_out.size() != layer.units()) throw ShapeError("dense_relu_backward: grad length mismatch");
  const auto z = dense_preactivation(layer, x);
  DenseGradients g{std::vector<double>(x.size(), 0.0), Tensor(layer.weights.shape()),
                   Tensor(layer.bias.shape())};
  for (std::size_t u = 0; u < z.size(); ++u) {
    if (!(z[u] > 0.0)) continue;
    const double gu = grad_out[u];
    g.bias[u] = gu;
    const auto w = layer.weights.row(u);
    auto gw = g.weights.row(u);
    for (std::size_t j = 0; j < x.size(); ++j) {
      gw[j] = gu * x[j];
      g.x[j] += gu * w[j];
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

SoftmaxClassifier::SoftmaxClassifier(Tensor w, Tensor b) : weights(std::move(w)), bias(std::move(b)) {
  require_matrix_and_vector(weights, bias, "SoftmaxClassifier");
  if (weights.dim(0) < 2) throw ArgumentError("SoftmaxClassifier: need at least 2 classes");
}

std::vector<double> classifier_logits(const SoftmaxClassifier& clf,
                                      std::span<const double> features) {
  if (features.size() != clf.features()) {
    throw ShapeError("classifier: feature length " + std::to_string(features.size()) +
                     ", expected " + std::to_string(clf.features()));
  }
  std::vector<double> z(clf.classes());
  for (std::size_t k = 0; k < z.size(); ++k) {
    const auto w = clf.weights.row(k);
    double acc = clf.bias[k];
    for (std::size_t j = 0; j < features.size(); ++j) acc += w[j] * features[j];
    z[k] = acc;
  }
  return z;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = std::exp(logits[k] - m);
    sum += p[k];
  }
  for (auto& v : p) v /= sum;
  return p;
}

SoftmaxResult softmax_cross_entropy_logits(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw ArgumentError("label " + std::to_string(label) + " out of range for " +
                        std::to_string(logits.size()) + " classes");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - m);
  SoftmaxResult r;
  r.loss = std::log(sum) - (logits[label] - m);
  r.probs = softmax(logits);
  r.grad_logits = r.probs;
  r.grad_logits[label] -= 1.0;
  return r;
}

SoftmaxResult softmax_cross_entropy(const SoftmaxClassifier& clf, std::span<const double> features,
                                    std::size_t label) {
  const auto z = classifier_logits(clf, features);
  return softmax_cross_entropy_logits(z, label);
}

ClassifierGradients classifier_backward(const SoftmaxClassifier& clf,
                                        std::span<const double> features,
                                        std::span<const double> grad_logits) {
  if (features.size() != clf.features() || grad_logits.size() != clf.classes()) {
    throw ShapeError("classifier_backward: shape mismatch");
  }
  ClassifierGradients g{std::vector<double>(features.size(), 0.0), Tensor(clf.weights.shape()),
                        Tensor(clf.bias.shape())};
  for (std::size_t k = 0; k < clf.classes(); ++k) {
    const double gk = grad_logits[k];
    g.bias[k] = gk;
    const auto w = clf.weights.row(k);
    auto gw = g.weights.row(k);
    for (std::size_t j = 0; j < features.size(); ++j) {
      gw[j] = gk * features[j];
      g.features[j] += gk * w[j];
    }
  }
  return g;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("argmax of empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace mbrbf
