#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dartvae/matrix.hpp"

namespace dartvae::diffnet {

/// Handle to a node in a dynamically built computation graph. Ops below
/// record enough structure for one reverse sweep; graphs are rebuilt per
/// batch, so nodes are cheap, immutable-by-convention value wrappers.
class Var {
 public:
  struct Node {
    Matrix value;
    Matrix grad;  // sized lazily during backward()
    bool requires_grad = false;
    std::string name;
    std::vector<std::shared_ptr<Node>> parents;
    // Accumulates this node's grad into its parents' grads.
    std::function<void(Node&)> backprop;
  };

  Var() = default;

  static Var leaf(Matrix value, bool requires_grad = false,
                  std::string name = {});
  static Var constant(Matrix value, std::string name = {}) {
    return leaf(std::move(value), false, std::move(name));
  }

  const Matrix& value() const { return node_->value; }
  /// Valid after backward(); zero matrix for parameters the loss ignores.
  const Matrix& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::string& name() const { return node_->name; }
  explicit operator bool() const { return node_ != nullptr; }

  std::shared_ptr<Node> node() const { return node_; }

  static Var from_node(std::shared_ptr<Node> n) {
    Var v;
    v.node_ = std::move(n);
    return v;
  }

 private:
  std::shared_ptr<Node> node_;
};

/// Runs one reverse sweep from a scalar (1x1) loss node. Gradients of every
/// node reachable from `loss` are zeroed first, so a Var can participate in
/// several backward passes. Throws NumericError if the loss or any produced
/// gradient is non-finite, naming the offending node.
void backward(const Var& loss);

/// Gradients of `loss` with respect to `params`, in order. Parameters the
/// loss does not depend on get zero matrices of matching shape.
struct GradientSet {
  std::vector<Matrix> tensors;
};
GradientSet compute_gradients(const Var& loss, std::span<const Var> params);

// --- graph ops -------------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var add_row_broadcast(const Var& x, const Var& bias);  // bias is 1xN
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var exp_elem(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var sum_all(const Var& a);    // 1x1
Var mean_all(const Var& a);   // 1x1
Var diag_part(const Var& a);  // NxN -> Nx1
/// Elementwise x^(-1/2) for x > 0, exactly 0 otherwise (zero subgradient).
Var rsqrt_or_zero(const Var& a);
Var concat_cols(std::span<const Var> parts);

/// Mean over all elements of (a-b)^2.
Var mse_all(const Var& a, const Var& b);
/// BxB matrix of pairwise cosine similarities between rows of z.
/// Zero-norm rows contribute similarity 0 against everything.
Var cosine_similarity_matrix(const Var& z);

}  // namespace dartvae::diffnet
