#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "am3/autodiff.hpp"
#include "am3/errors.hpp"
#include "am3/tensor.hpp"

namespace am3 {

/// Uniform in (-sqrt(6 / (fan_in + fan_out)), +sqrt(6 / (fan_in + fan_out))).
inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor w({fan_in, fan_out});
  for (double& v : w.values()) v = dist(rng);
  return w;
}

/// velocity <- momentum * velocity + gradient; value <- value - lr * velocity.
/// `gradients[i]` pairs with `params[i]`.
inline void sgd_momentum_step(std::span<Parameter* const> params, std::span<const Tensor> gradients,
                              double learning_rate, double momentum) {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (params.size() != gradients.size()) throw DimensionError("one gradient per parameter required");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    const Tensor& g = gradients[i];
    if (g.shape() != p.value.shape()) {
      throw DimensionError("gradient " + shape_string(g.shape()) + " for parameter " + shape_string(p.value.shape()));
    }
    for (std::size_t j = 0; j < g.size(); ++j) {
      p.velocity[j] = momentum * p.velocity[j] + g[j];
      p.value[j] -= learning_rate * p.velocity[j];
    }
  }
}

}  // namespace am3
