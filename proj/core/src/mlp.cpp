#include "dartvae/mlp.hpp"

#include <cmath>

#include "dartvae/errors.hpp"

namespace dartvae::diffnet {

MlpLayer init_layer(std::size_t in, std::size_t out, Activation act,
                    Rng& rng) {
  MlpLayer layer;
  layer.weights = Matrix(out, in);
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& w : layer.weights.values()) w = rng.uniform(-bound, bound);
  layer.biases.assign(out, 0.0);
  layer.activation = act;
  return layer;
}

Matrix apply_activation(Matrix m, Activation act) {
  switch (act) {
    case Activation::kIdentity:
      break;
    case Activation::kRelu:
      for (double& x : m.values()) x = x > 0.0 ? x : 0.0;
      break;
    case Activation::kSigmoid:
      for (double& x : m.values()) x = 1.0 / (1.0 + std::exp(-x));
      break;
  }
  return m;
}

Matrix linear_forward(const Matrix& x, const MlpLayer& layer) {
  if (x.cols() != layer.in_dim()) {
    throw ShapeError("linear_forward: input width " +
                     std::to_string(x.cols()) + " does not match layer in=" +
                     std::to_string(layer.in_dim()));
  }
  if (layer.biases.size() != layer.out_dim()) {
    throw ShapeError("linear_forward: bias length " +
                     std::to_string(layer.biases.size()) +
                     " does not match layer out=" +
                     std::to_string(layer.out_dim()));
  }
  Matrix out = matmul_nt(x, layer.weights);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) {
      out(r, c) += layer.biases[c];
    }
  }
  return apply_activation(std::move(out), layer.activation);
}

Var dense(const Var& x, const LayerVars& layer) {
  Var pre = add_row_broadcast(matmul_nt(x, layer.weights), layer.biases);
  switch (layer.activation) {
    case Activation::kIdentity:
      return pre;
    case Activation::kRelu:
      return relu(pre);
    case Activation::kSigmoid:
      return sigmoid(pre);
  }
  return pre;
}

}  // namespace dartvae::diffnet
