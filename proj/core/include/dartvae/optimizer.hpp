#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dartvae/autodiff.hpp"

namespace dartvae::diffnet {

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
};

/// Adaptive-moment state with decoupled weight decay. Accumulators mirror
/// the parameter layout they were initialized from.
struct OptimizerState {
  OptimizerConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  static OptimizerState init(std::span<const std::size_t> param_sizes,
                             const OptimizerConfig& config = {});
};

/// One update. Weight decay is applied directly to the parameters
/// (p *= 1 - lr*wd), not folded into the gradients. Throws NumericError on
/// non-finite gradients and ShapeError on layout mismatches.
void adamw_step(std::span<std::span<double>> params, const GradientSet& grads,
                OptimizerState& state);

}  // namespace dartvae::diffnet
