#include "mbrbf/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "mbrbf/errors.hpp"

namespace mbrbf {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const std::function<double()>& loss, std::span<GradProbe> probes,
                           double eps) {
  if (!(eps > 0.0)) throw ArgumentError("grad_check: eps must be positive");
  GradCheckReport report;
  for (auto& probe : probes) {
    if (probe.values.size() != probe.analytic.size()) {
      throw ShapeError("grad_check: probe '" + probe.name + "' has mismatched lengths");
    }
    for (std::size_t i = 0; i < probe.values.size(); ++i) {
      if (!probe.skip.empty() && probe.skip.at(i)) continue;
      const double saved = probe.values[i];
      probe.values[i] = saved + eps;
      const double up = loss();
      probe.values[i] = saved - eps;
      const double down = loss();
      probe.values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = relative_error(probe.analytic[i], numeric);
      ++report.checked;
      if (err > report.max_rel_error || std::isnan(err)) {
        report.max_rel_error = std::isnan(err) ? INFINITY : err;
        report.worst_probe = probe.name;
        report.worst_index = i;
        report.worst_analytic = probe.analytic[i];
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace mbrbf
