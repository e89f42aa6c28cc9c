#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "trinet/params.hpp"

namespace trinet {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-8;
  std::size_t warmup_steps = 0;
};

/// Serializable optimizer state: moments are keyed by parameter name and
/// created lazily on the first step that touches a parameter.
struct AdamState {
  std::size_t step = 0;
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;
};

/// Adam with bias correction and linear learning-rate warmup. Updates are
/// functional: each step replaces every parameter handle with a fresh leaf
/// tensor, leaving the consumed tape untouched.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig config);

  /// Applies one update using the gradients accumulated on `params`.
  /// Throws on a non-finite gradient, naming the parameter.
  void step(ParameterMap& params);

  /// Learning rate applied at 1-based step `t`.
  double learning_rate_at(std::size_t t) const;
  std::size_t steps_taken() const { return state_.step; }

  const AdamConfig& config() const { return config_; }
  const AdamState& state() const { return state_; }
  void restore(AdamState state);

 private:
  AdamConfig config_;
  AdamState state_;
};

}  // namespace trinet
