#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mbrbf {

/// One block of coordinates to check: `values` is perturbed in place by the
/// checker and must be what `loss` reads; `analytic` holds dLoss/dvalues.
struct GradProbe {
  std::string name;
  std::span<double> values;
  std::span<const double> analytic;
  /// Optional per-coordinate mask; true entries are not checked.
  std::vector<bool> skip = {};
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_probe;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
double relative_error(double analytic, double numeric);

/// Compares analytic gradients with central differences of `loss` using step
/// `eps` and returns the worst relative error. Values are restored exactly.
GradCheckReport grad_check(const std::function<double()>& loss, std::span<GradProbe> probes,
                           double eps = 1e-6);

}  // namespace mbrbf
