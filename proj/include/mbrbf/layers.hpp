#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mbrbf/tensor.hpp"

namespace mbrbf {

/// Smallest sigma^2 accepted by the RBF layer. Below this the layer raises
/// DivergenceError instead of clamping.
inline constexpr double kMinRadiusSquared = 1e-12;

// ---------------------------------------------------------------------------
// Gaussian RBF branch

/// U Gaussian units over a d-dimensional input. Unit i responds with
/// h_i = exp(-||x - mu_i||^2 / (2 sigma_i^2)); radii are stored as log sigma
/// so they stay positive under unconstrained updates.
struct RBFBranch {
  Tensor centers;    // U x d, one center per row
  Tensor log_radii;  // U

  RBFBranch(Tensor centers, Tensor log_radii);

  std::size_t units() const { return centers.dim(0); }
  std::size_t dim() const { return centers.dim(1); }
  double radius(std::size_t unit) const;
};

struct RBFGradients {
  std::vector<double> x;
  Tensor centers;
  Tensor log_radii;
};

std::vector<double> rbf_forward(const RBFBranch& branch, std::span<const double> x);
RBFGradients rbf_backward(const RBFBranch& branch, std::span<const double> x,
                          std::span<const double> grad_h);

// ---------------------------------------------------------------------------
// 1x1 reduction convolution

/// B filters of size 1x1 over C channels: out[b,h,w] = bias[b] + sum_c W[b,c] fmap[c,h,w].
struct ReduceConv {
  Tensor weights;  // B x C
  Tensor bias;     // B

  ReduceConv(Tensor weights, Tensor bias);

  std::size_t filters() const { return weights.dim(0); }
  std::size_t channels() const { return weights.dim(1); }
};

struct ReduceConvGradients {
  Tensor fmap;
  Tensor weights;
  Tensor bias;
};

Tensor reduce_conv_forward(const ReduceConv& rc, const Tensor& fmap);
ReduceConvGradients reduce_conv_backward(const ReduceConv& rc, const Tensor& fmap,
                                         const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Dense + ReLU branch (the non-local baseline)

struct DenseReLU {
  Tensor weights;  // U x d
  Tensor bias;     // U

  DenseReLU(Tensor weights, Tensor bias);

  std::size_t units() const { return weights.dim(0); }
  std::size_t dim() const { return weights.dim(1); }
};

struct DenseGradients {
  std::vector<double> x;
  Tensor weights;
  Tensor bias;
};

/// W x + b before the rectifier.
std::vector<double> dense_preactivation(const DenseReLU& layer, std::span<const double> x);
std::vector<double> dense_relu_forward(const DenseReLU& layer, std::span<const double> x);
/// Uses subgradient 0 where the pre-activation is exactly 0.
DenseGradients dense_relu_backward(const DenseReLU& layer, std::span<const double> x,
                                   std::span<const double> grad_out);

// ---------------------------------------------------------------------------
// Softmax classifier with cross-entropy

struct SoftmaxClassifier {
  Tensor weights;  // K x F
  Tensor bias;     // K

  SoftmaxClassifier(Tensor weights, Tensor bias);

  std::size_t classes() const { return weights.dim(0); }
  std::size_t features() const { return weights.dim(1); }
};

struct SoftmaxResult {
  double loss = 0.0;
  std::vector<double> probs;
  std::vector<double> grad_logits;
};

struct ClassifierGradients {
  std::vector<double> features;
  Tensor weights;
  Tensor bias;
};

std::vector<double> classifier_logits(const SoftmaxClassifier& clf,
                                      std::span<const double> features);
/// Max-subtracted softmax.
std::vector<double> softmax(std::span<const double> logits);
/// Loss, probabilities and dLoss/dlogits = probs - onehot(label) for given logits.
SoftmaxResult softmax_cross_entropy_logits(std::span<const double> logits, std::size_t label);
SoftmaxResult softmax_cross_entropy(const SoftmaxClassifier& clf, std::span<const double> features,
                                    std::size_t label);
ClassifierGradients classifier_backward(const SoftmaxClassifier& clf,
                                        std::span<const double> features,
                                        std::span<const double> grad_logits);

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace mbrbf
