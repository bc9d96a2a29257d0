#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mbrbf/params.hpp"

namespace mbrbf {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moments per parameter plus the step count. Moments are
/// created on the first step, in parameter order.
struct AdamState {
  AdamHyper hyper;
  std::vector<NamedTensor> m;
  std::vector<NamedTensor> v;
  std::uint64_t t = 0;
};

/// One Adam update with bias correction. Throws DivergenceError and leaves
/// everything untouched when a gradient is not finite.
void adam_step(const std::vector<ParamRef>& params, const GradientSet& grads, AdamState& state);

/// theta <- theta - lr * g, same failure behaviour as adam_step.
void sgd_step(const std::vector<ParamRef>& params, const GradientSet& grads, double lr);

}  // namespace mbrbf
