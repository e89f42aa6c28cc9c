#include "trinet/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace trinet {

AdamOptimizer::AdamOptimizer(AdamConfig config) : config_(config) {
  if (config_.learning_rate <= 0.0) {
    throw std::invalid_argument("optimizer: learning_rate must be positive");
  }
  if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 ||
      config_.beta2 >= 1.0) {
    throw std::invalid_argument("optimizer: betas must lie in [0, 1)");
  }
  if (config_.epsilon <= 0.0) {
    throw std::invalid_argument("optimizer: epsilon must be positive");
  }
}

double AdamOptimizer::learning_rate_at(std::size_t t) const {
  if (config_.warmup_steps == 0 || t >= config_.warmup_steps) {
    return config_.learning_rate;
  }
  return config_.learning_rate * static_cast<double>(t) /
         static_cast<double>(config_.warmup_steps);
}

void AdamOptimizer::step(ParameterMap& params) {
  const std::size_t t = state_.step + 1;
  const double lr = learning_rate_at(t);
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t));

  for (const auto& name : params.names()) {
    const Tensor& param = params.at(name);
    if (!param.requires_grad()) continue;
    const std::vector<double>& g = param.grad();
    for (double v : g) {
      if (!std::isfinite(v)) {
        throw std::runtime_error("optimizer: non-finite gradient for parameter '" +
                                 name + "'");
      }
    }

    auto& m = state_.first_moment[name];
    auto& v2 = state_.second_moment[name];
    if (m.empty()) m.assign(g.size(), 0.0);
    if (v2.empty()) v2.assign(g.size(), 0.0);
    if (m.size() != g.size() || v2.size() != g.size()) {
      throw std::runtime_error("optimizer: moment shape mismatch for parameter '" +
                               name + "'");
    }

    std::vector<double> updated = param.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v2[i] = config_.beta2 * v2[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v2[i] / bc2;
      updated[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
    params.replace(name, Tensor(param.shape(), std::move(updated), true));
  }
  state_.step = t;
}

void AdamOptimizer::restore(AdamState state) { state_ = std::move(state); }

}  // namespace trinet
