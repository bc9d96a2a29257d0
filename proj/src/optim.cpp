#include "mbrbf/optim.hpp"

#include <cmath>

#include "mbrbf/errors.hpp"

namespace mbrbf {

namespace {

void check_alignment(const std::vector<ParamRef>& params, const GradientSet& grads) {
  const auto& g = grads.entries();
  if (g.size() != params.size()) {
    throw ShapeError("optimizer: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(g.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (g[i].name != params[i].name || g[i].tensor.shape() != params[i].tensor->shape()) {
      throw ShapeError("optimizer: gradient '" + g[i].name + "' does not match parameter '" +
                       params[i].name + "'");
    }
    if (!g[i].tensor.all_finite()) {
      throw DivergenceError("non-finite gradient for '" + g[i].name + "'");
    }
  }
}

}  // namespace

void adam_step(const std::vector<ParamRef>& params, const GradientSet& grads, AdamState& state) {
  check_alignment(params, grads);
  if (state.t == 0 && state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back({p.name, Tensor(p.tensor->shape())});
      state.v.push_back({p.name, Tensor(p.tensor->shape())});
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam state does not match parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].name != params[i].name || state.m[i].tensor.shape() != params[i].tensor->shape()) {
      throw ShapeError("adam state entry '" + state.m[i].name + "' does not match parameter");
    }
  }

  const auto& h = state.hyper;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  const auto& g = grads.entries();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].tensor->data();
    auto m = state.m[i].tensor.data();
    auto v = state.v[i].tensor.data();
    const auto gi = g[i].tensor.data();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * gi[k];
      v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * gi[k] * gi[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      theta[k] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
  }
}

void sgd_step(const std::vector<ParamRef>& params, const GradientSet& grads, double lr) {
  check_alignment(params, grads);
  const auto& g = grads.entries();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].tensor->data();
    const auto gi = g[i].tensor.data();
    for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= lr * gi[k];
  }
}

}  // namespace mbrbf
