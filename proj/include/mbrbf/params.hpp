#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mbrbf/tensor.hpp"

namespace mbrbf {

/// Mutable handle to a named parameter tensor owned elsewhere.
struct ParamRef {
  std::string name;
  Tensor* tensor;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Gradients keyed by parameter name, kept in the model's parameter order.
class GradientSet {
 public:
  void add(std::string name, Tensor grad);

  const Tensor* find(std::string_view name) const;
  Tensor* find(std::string_view name);
  bool contains_prefix(std::string_view prefix) const;

  /// this += other; names and shapes must line up entry for entry.
  void accumulate(const GradientSet& other);
  void scale(double factor);
  bool all_finite() const;

  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<NamedTensor> entries_;
};

/// Copies the current values of `params`.
std::vector<NamedTensor> snapshot(const std::vector<ParamRef>& params);
/// Writes a snapshot back; names and shapes must match.
void restore(const std::vector<ParamRef>& params, const std::vector<NamedTensor>& saved);

}  // namespace mbrbf
