#include "mbrbf/params.hpp"

#include "mbrbf/errors.hpp"

namespace mbrbf {

void GradientSet::add(std::string name, Tensor grad) {
  entries_.push_back({std::move(name), std::move(grad)});
}

const Tensor* GradientSet::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e.tensor;
  }
  return nullptr;
}

Tensor* GradientSet::find(std::string_view name) {
  for (auto& e : entries_) {
    if (e.name == name) return &e.tensor;
  }
  return nullptr;
}

bool GradientSet::contains_prefix(std::string_view prefix) const {
  for (const auto& e : entries_) {
    if (e.name.starts_with(prefix)) return true;
  }
  return false;
}

void GradientSet::accumulate(const GradientSet& other) {
  if (entries_.empty()) {
    entries_ = other.entries_;
    return;
  }
  if (other.entries_.size() != entries_.size()) throw InternalError("gradient sets differ in size");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& mine = entries_[i];
    const auto& theirs = other.entries_[i];
    if (mine.name != theirs.name || mine.tensor.shape() != theirs.tensor.shape()) {
      throw InternalError("gradient entry mismatch at '" + mine.name + "'");
    }
    auto dst = mine.tensor.data();
    const auto src = theirs.tensor.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

void GradientSet::scale(double factor) {
  for (auto& e : entries_) {
    for (auto& v : e.tensor.data()) v *= factor;
  }
}

bool GradientSet::all_finite() const {
  for (const auto& e : entries_) {
    if (!e.tensor.all_finite()) return false;
  }
  return true;
}

std::vector<NamedTensor> snapshot(const std::vector<ParamRef>& params) {
  std::vector<NamedTensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back({p.name, *p.tensor});
  return out;
}

void restore(const std::vector<ParamRef>& params, const std::vector<NamedTensor>& saved) {
  if (params.size() != saved.size()) throw InternalError("snapshot size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != saved[i].name || params[i].tensor->shape() != saved[i].tensor.shape()) {
      throw InternalError("snapshot entry mismatch at '" + params[i].name + "'");
    }
    *params[i].tensor = saved[i].tensor;
  }
}

}  // namespace mbrbf
