#include "dartvae/optimizer.hpp"

#include <cmath>
#include <string>

#include "dartvae/errors.hpp"

namespace dartvae::diffnet {

OptimizerState OptimizerState::init(std::span<const std::size_t> param_sizes,
                                    const OptimizerConfig& config) {
  OptimizerState state;
  state.config = config;
  state.first_moment.reserve(param_sizes.size());
  state.second_moment.reserve(param_sizes.size());
  for (std::size_t n : param_sizes) {
    state.first_moment.emplace_back(n, 0.0);
    state.second_moment.emplace_back(n, 0.0);
  }
  return state;
}

void adamw_step(std::span<std::span<double>> params, const GradientSet& grads,
                OptimizerState& state) {
  if (params.size() != grads.tensors.size() ||
      params.size() != state.first_moment.size()) {
    throw ShapeError("adamw_step: parameter/gradient/state tensor counts "
                     "disagree");
  }
  const OptimizerConfig& c = state.config;
  state.step += 1;
  const double bias1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const double decay = 1.0 - c.learning_rate * c.weight_decay;

  for (std::size_t t = 0; t < params.size(); ++t) {
    std::span<double> p = params[t];
    const auto g = grads.tensors[t].values();
    std::vector<double>& m = state.first_moment[t];
    std::vector<double>& v = state.second_moment[t];
    if (g.size() != p.size() || m.size() != p.size()) {
      throw ShapeError("adamw_step: tensor " + std::to_string(t) +
                       " shape mismatch");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw NumericError("adamw_step: non-finite gradient in tensor " +
                           std::to_string(t));
      }
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      p[i] *= decay;
      p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace dartvae::diffnet
