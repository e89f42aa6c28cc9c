#pragma once

#include <map>
#include <string>
#include <vector>

#include "trinet/tensor.hpp"

namespace trinet {

/// Named collection of parameter tensors. Iteration order is lexicographic by
/// name, which keeps optimizer updates, EMA blends, and serialization
/// deterministic across runs.
class ParameterMap {
 public:
  /// Adds a parameter; throws if the name is already present.
  void insert(const std::string& name, Tensor value);
  /// Looks up a parameter; throws if absent.
  const Tensor& at(const std::string& name) const;
  /// Swaps in a new tensor for an existing name; shapes must match.
  void replace(const std::string& name, Tensor value);
  bool contains(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;
  std::vector<std::string> names() const;
  void zero_grads();

  using const_iterator = std::map<std::string, Tensor>::const_iterator;
  const_iterator begin() const { return entries_.begin(); }
  const_iterator end() const { return entries_.end(); }

  /// Deep copy: fresh leaf tensors holding the same values.
  static ParameterMap clone(const ParameterMap& source, bool requires_grad);

 private:
  std::map<std::string, Tensor> entries_;
};

/// Largest elementwise |a - b| over all parameters; the maps must hold the
/// same names and shapes.
double max_abs_difference(const ParameterMap& a, const ParameterMap& b);

}  // namespace trinet
