#include "dartvae/autodiff.hpp"

#include <cmath>
#include <unordered_set>
#include <utility>

#include "dartvae/errors.hpp"

namespace dartvae::diffnet {

namespace {

using Node = Var::Node;
using NodePtr = std::shared_ptr<Node>;

void accumulate(Matrix& grad, const Matrix& delta) {
  if (grad.empty()) {
    grad = delta;
    return;
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    grad.values()[i] += delta.values()[i];
  }
}

void ensure_grad_shape(Node& n) {
  if (n.grad.empty() && n.value.size() > 0) {
    n.grad = Matrix(n.value.rows(), n.value.cols());
  } else {
    for (double& g : n.grad.values()) g = 0.0;
  }
}

Var make_op(std::string name, Matrix value, std::vector<Var> parents,
            std::function<void(Node&)> backprop) {
  auto node = std::make_shared<Node>();
  node->name = std::move(name);
  node->value = std::move(value);
  if (!node->value.all_finite()) {
    throw NumericError("non-finite values produced by op '" + node->name +
                       "'");
  }
  for (const Var& p : parents) {
    node->requires_grad = node->requires_grad || p.requires_grad();
    node->parents.push_back(p.node());
  }
  if (node->requires_grad) {
    node->backprop = std::move(backprop);
  }
  return Var::from_node(std::move(node));
}

// Post-order DFS, iterative so very deep graphs cannot overflow the stack.
std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      Node* child = node->parents[next_child].get();
      ++next_child;
      if (visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

Var Var::leaf(Matrix value, bool requires_grad, std::string name) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->name = std::move(name);
  return Var::from_node(std::move(node));
}

void backward(const Var& loss) {
  if (!loss) throw UsageError("backward: empty loss var");
  if (loss.value().rows() != 1 || loss.value().cols() != 1) {
    throw UsageError("backward: loss must be 1x1, got " +
                     shape_string(loss.value()));
  }
  if (!std::isfinite(loss.value()(0, 0))) {
    throw NumericError("backward: loss '" + loss.name() + "' is non-finite");
  }
  std::vector<Node*> order = topo_order(loss.node().get());
  for (Node* n : order) ensure_grad_shape(*n);
  loss.node()->grad(0, 0) = 1.0;
  // `order` is post-order, so walking it backwards visits each node after
  // all of its consumers.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->requires_grad || !n->backprop) continue;
    n->backprop(*n);
  }
  for (Node* n : order) {
    if (n->requires_grad && !n->grad.all_finite()) {
      throw NumericError("backward: non-finite gradient at node '" + n->name +
                         "'");
    }
  }
}

GradientSet compute_gradients(const Var& loss, std::span<const Var> params) {
  // a param may be unreachable from this loss but still hold a gradient
  // from an earlier backward over a sibling component
  for (const Var& p : params) p.node()->grad = Matrix();
  backward(loss);
  GradientSet out;
  out.tensors.reserve(params.size());
  for (const Var& p : params) {
    if (p.node()->grad.empty()) {
      out.tensors.emplace_back(p.value().rows(), p.value().cols());
    } else {
      out.tensors.push_back(p.node()->grad);
    }
  }
  return out;
}

Var matmul(const Var& a, const Var& b) {
  Matrix value = matmul(a.value(), b.value());
  return make_op("matmul", std::move(value), {a, b}, [](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    if (pa.requires_grad) accumulate(pa.grad, matmul_nt(n.grad, pb.value));
    if (pb.requires_grad) accumulate(pb.grad, matmul_tn(pa.value, n.grad));
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  Matrix value = matmul_nt(a.value(), b.value());
  return make_op("matmul_nt", std::move(value), {a, b}, [](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    if (pa.requires_grad) accumulate(pa.grad, matmul(n.grad, pb.value));
    if (pb.requires_grad) accumulate(pb.grad, matmul_tn(n.grad, pa.value));
  });
}

Var transpose(const Var& a) {
  return make_op("transpose", transpose(a.value()), {a}, [](Node& n) {
    accumulate(n.parents[0]->grad, transpose(n.grad));
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Matrix value = a.value();
  for (std::size_t i = 0; i < value.size(); ++i) {
    value.values()[i] += b.value().values()[i];
  }
  return make_op("add", std::move(value), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) accumulate(n.parents[0]->grad, n.grad);
    if (n.parents[1]->requires_grad) accumulate(n.parents[1]->grad, n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Matrix value = a.value();
  for (std::size_t i = 0; i < value.size(); ++i) {
    value.values()[i] -= b.value().values()[i];
  }
  return make_op("sub", std::move(value), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) accumulate(n.parents[0]->grad, n.grad);
    if (n.parents[1]->requires_grad) {
      Matrix neg = n.grad;
      for (double& g : neg.values()) g = -g;
      accumulate(n.parents[1]->grad, neg);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  Matrix value = hadamard(a.value(), b.value());
  return make_op("mul", std::move(value), {a, b}, [](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    if (pa.requires_grad) accumulate(pa.grad, hadamard(n.grad, pb.value));
    if (pb.requires_grad) accumulate(pb.grad, hadamard(n.grad, pa.value));
  });
}

Var add_row_broadcast(const Var& x, const Var& bias) {
  if (bias.value().rows() != 1 || bias.value().cols() != x.value().cols()) {
    throw ShapeError("add_row_broadcast: " + shape_string(x.value()) + " + " +
                     shape_string(bias.value()));
  }
  Matrix value = x.value();
  for (std::size_t r = 0; r < value.rows(); ++r) {
    for (std::size_t c = 0; c < value.cols(); ++c) {
      value(r, c) += bias.value()(0, c);
    }
  }
  return make_op("add_row_broadcast", std::move(value), {x, bias}, [](Node& n) {
    Node& px = *n.parents[0];
    Node& pb = *n.parents[1];
    if (px.requires_grad) accumulate(px.grad, n.grad);
    if (pb.requires_grad) {
      Matrix colsum(1, n.grad.cols());
      for (std::size_t r = 0; r < n.grad.rows(); ++r) {
        for (std::size_t c = 0; c < n.grad.cols(); ++c) {
          colsum(0, c) += n.grad(r, c);
        }
      }
      accumulate(pb.grad, colsum);
    }
  });
}

Var relu(const Var& a) {
  Matrix value = a.value();
  for (double& x : value.values()) x = x > 0.0 ? x : 0.0;
  return make_op("relu", std::move(value), {a}, [](Node& n) {
    Matrix d = n.grad;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (n.parents[0]->value.values()[i] <= 0.0) d.values()[i] = 0.0;
    }
    accumulate(n.parents[0]->grad, d);
  });
}

Var sigmoid(const Var& a) {
  Matrix value = a.value();
  for (double& x : value.values()) x = 1.0 / (1.0 + std::exp(-x));
  return make_op("sigmoid", std::move(value), {a}, [](Node& n) {
    Matrix d = n.grad;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double s = n.value.values()[i];
      d.values()[i] *= s * (1.0 - s);
    }
    accumulate(n.parents[0]->grad, d);
  });
}

Var exp_elem(const Var& a) {
  Matrix value = a.value();
  for (double& x : value.values()) x = std::exp(x);
  return make_op("exp", std::move(value), {a}, [](Node& n) {
    accumulate(n.parents[0]->grad, hadamard(n.grad, n.value));
  });
}

Var scale(const Var& a, double c) {
  Matrix value = a.value();
  for (double& x : value.values()) x *= c;
  return make_op("scale", std::move(value), {a}, [c](Node& n) {
    Matrix d = n.grad;
    for (double& g : d.values()) g *= c;
    accumulate(n.parents[0]->grad, d);
  });
}

Var add_scalar(const Var& a, double c) {
  Matrix value = a.value();
  for (double& x : value.values()) x += c;
  return make_op("add_scalar", std::move(value), {a}, [](Node& n) {
    accumulate(n.parents[0]->grad, n.grad);
  });
}

Var sum_all(const Var& a) {
  double acc = 0.0;
  for (double x : a.value().values()) acc += x;
  return make_op("sum_all", Matrix(1, 1, {acc}), {a}, [](Node& n) {
    const double g = n.grad(0, 0);
    Matrix d(n.parents[0]->value.rows(), n.parents[0]->value.cols(), g);
    accumulate(n.parents[0]->grad, d);
  });
}

Var mean_all(const Var& a) {
  const std::size_t count = a.value().size();
  if (count == 0) throw UsageError("mean_all: empty matrix");
  return scale(sum_all(a), 1.0 / static_cast<double>(count));
}

Var diag_part(const Var& a) {
  const Matrix& m = a.value();
  if (m.rows() != m.cols()) {
    throw ShapeError("diag_part: matrix must be square, got " +
                     shape_string(m));
  }
  Matrix value(m.rows(), 1);
  for (std::size_t i = 0; i < m.rows(); ++i) value(i, 0) = m(i, i);
  return make_op("diag_part", std::move(value), {a}, [](Node& n) {
    Matrix d(n.parents[0]->value.rows(), n.parents[0]->value.cols());
    for (std::size_t i = 0; i < d.rows(); ++i) d(i, i) = n.grad(i, 0);
    accumulate(n.parents[0]->grad, d);
  });
}

Var rsqrt_or_zero(const Var& a) {
  Matrix value = a.value();
  for (double& x : value.values()) x = x > 0.0 ? 1.0 / std::sqrt(x) : 0.0;
  return make_op("rsqrt_or_zero", std::move(value), {a}, [](Node& n) {
    Matrix d = n.grad;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double x = n.parents[0]->value.values()[i];
      const double y = n.value.values()[i];  // x^(-1/2) or 0
      d.values()[i] *= x > 0.0 ? -0.5 * y * y * y : 0.0;
    }
    accumulate(n.parents[0]->grad, d);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_cols: no inputs");
  std::vector<Matrix> values;
  values.reserve(parts.size());
  for (const Var& p : parts) values.push_back(p.value());
  Matrix value = concat_cols(std::span<const Matrix>(values));
  std::vector<Var> parents(parts.begin(), parts.end());
  return make_op("concat_cols", std::move(value), std::move(parents),
                 [](Node& n) {
                   std::size_t offset = 0;
                   for (auto& parent : n.parents) {
                     const std::size_t w = parent->value.cols();
                     if (parent->requires_grad) {
                       Matrix d(parent->value.rows(), w);
                       for (std::size_t r = 0; r < d.rows(); ++r) {
                         for (std::size_t c = 0; c < w; ++c) {
                           d(r, c) = n.grad(r, offset + c);
                         }
                       }
                       accumulate(parent->grad, d);
                     }
                     offset += w;
                   }
                 });
}

Var mse_all(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mse");
  Var diff = sub(a, b);
  return mean_all(mul(diff, diff));
}

Var cosine_similarity_matrix(const Var& z) {
  Var gram = matmul_nt(z, z);
  Var inv_norms = rsqrt_or_zero(diag_part(gram));
  return mul(gram, matmul_nt(inv_norms, inv_norms));
}

}  // namespace dartvae::diffnet
