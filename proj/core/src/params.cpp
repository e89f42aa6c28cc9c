#include "trinet/params.hpp"

#include <cmath>
#include <stdexcept>

namespace trinet {

void ParameterMap::insert(const std::string& name, Tensor value) {
  if (!value.defined()) {
    throw std::invalid_argument("parameter '" + name + "': undefined tensor");
  }
  auto [it, inserted] = entries_.emplace(name, std::move(value));
  (void)it;
  if (!inserted) {
    throw std::invalid_argument("parameter '" + name + "' already exists");
  }
}

const Tensor& ParameterMap::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::out_of_range("parameter '" + name + "' not found");
  }
  return it->second;
}

void ParameterMap::replace(const std::string& name, Tensor value) {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::out_of_range("parameter '" + name + "' not found");
  }
  if (!shapes_equal(it->second.shape(), value.shape())) {
    throw std::invalid_argument("parameter '" + name + "': shape " +
                                shape_to_string(value.shape()) + " does not match " +
                                shape_to_string(it->second.shape()));
  }
  it->second = std::move(value);
}

bool ParameterMap::contains(const std::string& name) const {
  return entries_.find(name) != entries_.end();
}

std::size_t ParameterMap::total_elements() const {
  std::size_t total = 0;
  for (const auto& [name, tensor] : entries_) total += tensor.size();
  return total;
}

std::vector<std::string> ParameterMap::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, tensor] : entries_) out.push_back(name);
  return out;
}

void ParameterMap::zero_grads() {
  for (auto& [name, tensor] : entries_) {
    if (tensor.requires_grad()) tensor.zero_grad();
  }
}

ParameterMap ParameterMap::clone(const ParameterMap& source, bool requires_grad) {
  ParameterMap out;
  for (const auto& [name, tensor] : source) {
    out.insert(name, Tensor(tensor.shape(), tensor.values(), requires_grad));
  }
  return out;
}

double max_abs_difference(const ParameterMap& a, const ParameterMap& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("max_abs_difference: parameter counts differ");
  }
  double worst = 0.0;
  for (const auto& [name, ta] : a) {
    const Tensor& tb = b.at(name);
    if (!shapes_equal(ta.shape(), tb.shape())) {
      throw std::invalid_argument("max_abs_difference: shape mismatch for '" + name + "'");
    }
    const auto& va = ta.values();
    const auto& vb = tb.values();
    for (std::size_t i = 0; i < va.size(); ++i) {
      worst = std::max(worst, std::abs(va[i] - vb[i]));
    }
  }
  return worst;
}

}  // namespace trinet
