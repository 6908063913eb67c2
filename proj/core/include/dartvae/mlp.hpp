#pragma once

#include <cstdint>
#include <vector>

#include "dartvae/autodiff.hpp"
#include "dartvae/matrix.hpp"
#include "dartvae/rng.hpp"

namespace dartvae::diffnet {

enum class Activation : std::uint8_t { kIdentity, kRelu, kSigmoid };

/// One dense layer: y = act(W x + b), weights stored out x in.
struct MlpLayer {
  Matrix weights;
  std::vector<double> biases;
  Activation activation = Activation::kIdentity;

  std::size_t in_dim() const { return weights.cols(); }
  std::size_t out_dim() const { return weights.rows(); }

  bool operator==(const MlpLayer&) const = default;
};

/// Weights uniform in +/- sqrt(6 / (in + out)), biases zero.
MlpLayer init_layer(std::size_t in, std::size_t out, Activation act, Rng& rng);

/// Batch forward: x is batch x in, result batch x out.
Matrix linear_forward(const Matrix& x, const MlpLayer& layer);

Matrix apply_activation(Matrix m, Activation act);

/// Graph-building counterpart of linear_forward, for training.
struct LayerVars {
  Var weights;
  Var biases;  // 1 x out
  Activation activation = Activation::kIdentity;
};
Var dense(const Var& x, const LayerVars& layer);

}  // namespace dartvae::diffnet
