#pragma once

// Tape-free reverse-mode differentiation over dense double arrays.
//
// Every op returns a Tensor whose node keeps its parents and a closure that
// pushes the output gradient back into them. backward() walks the graph in
// reverse topological order once and then releases it; calling it again on
// the same loss is an error.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "vctc/numerics.hpp"

namespace vctc::ad {

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Node {
  Array value;
  Array grad;  // empty until something is accumulated
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  bool leaf = true;
  bool released = false;

  // Gradient buffer, zero-initialized on first use.
  Array& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Array value);
  // Leaf that receives a gradient (parameters and differentiable inputs).
  static Tensor variable(Array value);

  bool defined() const { return node_ != nullptr; }
  const Array& value() const { return node_->value; }
  // Direct access for optimizers and finite-difference probes; only valid on leaves.
  Array& mutable_value();
  const std::vector<std::size_t>& shape() const { return node_->value.shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }
  bool has_grad() const { return !node_->grad.data.empty(); }
  // Accumulated gradient; zeros of the value's shape when nothing has arrived.
  Array grad() const;
  void zero_grad() { node_->grad = Array(); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Builds an op result. The backward closure receives the result node; its
// grad is populated and parents are reachable through node.parents.
Tensor make_op(Array value, std::vector<Tensor> parents, std::function<void(Node&)> backward_fn);

// Reverse sweep from a scalar loss. A loss that does not require grad is a
// no-op. Throws ContractError for a non-scalar loss and GraphError when any
// part of the graph was already released by an earlier sweep.
void backward(const Tensor& loss);

// Elementwise, identical row/col extents.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor shift(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor square(const Tensor& a);
// Gradient passes only where lo < a < hi.
Tensor clamp(const Tensor& a, double lo, double hi);

// Sum of every element, as a shape {1} scalar.
Tensor sum(const Tensor& a);
Tensor add_scalars(std::span<const Tensor> terms);

// (n x k) * (k x m).
Tensor matmul(const Tensor& a, const Tensor& b);
// x W^T + b for x of shape (n x in) or (in), W (out x in), b (out).
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
// Row r as a (1 x cols) tensor.
Tensor row(const Tensor& a, std::size_t r);
Tensor stack_rows(std::span<const Tensor> rows);

// Row-wise log-softmax.
Tensor log_softmax(const Tensor& a);

}  // namespace vctc::ad
