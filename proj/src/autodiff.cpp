#include "vctc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "vctc/error.hpp"

namespace vctc::ad {

Array& Node::grad_buffer() {
  if (grad.data.empty()) grad = Array(value.shape, 0.0);
  return grad;
}

Tensor Tensor::constant(Array value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Tensor(std::move(n));
}

Tensor Tensor::variable(Array value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Tensor(std::move(n));
}

Array& Tensor::mutable_value() {
  detail::require(node_->leaf, "mutable_value: tensor is not a leaf");
  return node_->value;
}

double Tensor::item() const {
  detail::require(size() == 1, "item: tensor is not a scalar");
  return node_->value.data[0];
}

Array Tensor::grad() const {
  if (has_grad()) return node_->grad;
  return Array(node_->value.shape, 0.0);
}

Tensor make_op(Array value, std::vector<Tensor> parents, std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->leaf = false;
  for (const Tensor& p : parents) {
    detail::require(p.defined(), "make_op: undefined parent");
    if (p.node()->released) throw GraphError("make_op: parent graph already released");
    n->requires_grad = n->requires_grad || p.requires_grad();
  }
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (Tensor& p : parents) n->parents.push_back(p.node_ptr());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  detail::require(loss.defined(), "backward: undefined loss");
  detail::require(loss.size() == 1, "backward: loss must be a scalar");
  Node* root = loss.node();
  if (root->released) throw GraphError("backward: graph already released (backward called twice?)");
  if (!root->requires_grad) return;

  // Iterative post-order DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (!p->requires_grad || seen.count(p)) continue;
      if (p->released) throw GraphError("backward: graph already released");
      seen.insert(p);
      stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer().data[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->leaf) continue;
    if (!n->grad.data.empty() && n->backward_fn) n->backward_fn(*n);
  }
  // Parents precede children in `order`, so dropping a node's parent links
  // only frees nodes that were already visited.
  for (Node* n : order) {
    if (n->leaf) continue;
    n->backward_fn = nullptr;
    n->parents.clear();
    n->grad = Array();
    n->released = true;
  }
}

namespace {

void require_same_extent(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.size() != b.size()) {
    throw ContractError(std::string(op) + ": shape mismatch");
  }
}

// Elementwise unary op; dfn(x, y) is dy/dx given input x and output y.
template <typename F, typename D>
Tensor unary(const Tensor& a, F fn, D dfn) {
  Array out(a.shape());
  const auto& in = a.value().data;
  for (std::size_t i = 0; i < in.size(); ++i) out.data[i] = fn(in[i]);
  return make_op(std::move(out), {a}, [dfn](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    auto& g = pa.grad_buffer().data;
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad.data[i] * dfn(pa.value.data[i], self.value.data[i]);
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_extent(a, b, "add");
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.value().data[i] + b.value().data[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer().data;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad.data[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_extent(a, b, "sub");
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.value().data[i] - b.value().data[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const double sign[2] = {1.0, -1.0};
    for (std::size_t k = 0; k < 2; ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& g = p.grad_buffer().data;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[k] * self.grad.data[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_extent(a, b, "mul");
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.value().data[i] * b.value().data[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer().data;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad.data[i] * pb.value.data[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer().data;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad.data[i] * pa.value.data[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_extent(a, b, "div");
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.value().data[i] / b.value().data[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer().data;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad.data[i] / pb.value.data[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer().data;
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] -= self.grad.data[i] * self.value.data[i] / pb.value.data[i];
      }
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor shift(const Tensor& a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  detail::require(lo <= hi, "clamp: lo > hi");
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  return make_op(Array::scalar(s), {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    const double g0 = self.grad.data[0];
    for (double& g : pa.grad_buffer().data) g += g0;
  });
}

Tensor add_scalars(std::span<const Tensor> terms) {
  detail::require(!terms.empty(), "add_scalars: no terms");
  double s = 0.0;
  for (const Tensor& t : terms) {
    detail::require(t.size() == 1, "add_scalars: term is not a scalar");
    s += t.value().data[0];
  }
  return make_op(Array::scalar(s), std::vector<Tensor>(terms.begin(), terms.end()), [](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->grad_buffer().data[0] += self.grad.data[0];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  detail::require(b.rows() == k, "matmul: inner dimensions differ");
  Array out = Array::matrix(n, m);
  const auto& A = a.value().data;
  const auto& B = b.value().data;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      for (std::size_t j = 0; j < m; ++j) out.data[i * m + j] += aip * B[p * m + j];
    }
  }
  return make_op(std::move(out), {a, b}, [n, k, m](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto& G = self.grad.data;
    if (pa.requires_grad) {
      auto& gA = pa.grad_buffer().data;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += G[i * m + j] * pb.value.data[p * m + j];
          gA[i * k + p] += acc;
        }
    }
    if (pb.requires_grad) {
      auto& gB = pb.grad_buffer().data;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = pa.value.data[i * k + p];
          for (std::size_t j = 0; j < m; ++j) gB[p * m + j] += aip * G[i * m + j];
        }
    }
  });
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const std::size_t in = weight.cols(), out_dim = weight.rows();
  detail::require(weight.shape().size() == 2, "affine: weight must be a matrix");
  detail::require(x.cols() == in, "affine: input width does not match weight");
  detail::require(bias.size() == out_dim, "affine: bias length does not match weight");
  const std::size_t n = x.rows();
  std::vector<std::size_t> shape =
      x.shape().size() <= 1 ? std::vector<std::size_t>{out_dim} : std::vector<std::size_t>{n, out_dim};
  Array out(shape);
  const auto& X = x.value().data;
  const auto& W = weight.value().data;
  const auto& b = bias.value().data;
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = &X[i * in];
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* wo = &W[o * in];
      double acc = b[o];
      for (std::size_t c = 0; c < in; ++c) acc += wo[c] * xi[c];
      out.data[i * out_dim + o] = acc;
    }
  }
  return make_op(std::move(out), {x, weight, bias}, [n, in, out_dim](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node& pb = *self.parents[2];
    const auto& G = self.grad.data;
    if (px.requires_grad) {
      auto& gx = px.grad_buffer().data;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double g = G[i * out_dim + o];
          const double* wo = &pw.value.data[o * in];
          double* gxi = &gx[i * in];
          for (std::size_t c = 0; c < in; ++c) gxi[c] += g * wo[c];
        }
    }
    if (pw.requires_grad) {
      auto& gw = pw.grad_buffer().data;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double g = G[i * out_dim + o];
          const double* xi = &px.value.data[i * in];
          double* gwo = &gw[o * in];
          for (std::size_t c = 0; c < in; ++c) gwo[c] += g * xi[c];
        }
    }
    if (pb.requires_grad) {
      auto& gb = pb.grad_buffer().data;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < out_dim; ++o) gb[o] += G[i * out_dim + o];
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  detail::require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (const Tensor& p : parts) {
    detail::require(p.rows() == n, "concat_cols: row count mismatch");
    offsets.push_back(total);
    total += p.cols();
  }
  const bool vector_like = parts[0].shape().size() <= 1;
  Array out(vector_like ? std::vector<std::size_t>{total} : std::vector<std::size_t>{n, total});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t c = parts[k].cols();
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(&parts[k].value().data[i * c], c, &out.data[i * total + offsets[k]]);
  }
  return make_op(std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                 [n, total, offsets](Node& self) {
                   for (std::size_t k = 0; k < self.parents.size(); ++k) {
                     Node& p = *self.parents[k];
                     if (!p.requires_grad) continue;
                     const std::size_t c = p.value.cols();
                     auto& g = p.grad_buffer().data;
                     for (std::size_t i = 0; i < n; ++i)
                       for (std::size_t j = 0; j < c; ++j)
                         g[i * c + j] += self.grad.data[i * total + offsets[k] + j];
                   }
                 });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  detail::require(begin < end && end <= a.cols(), "slice_cols: bad range");
  const std::size_t n = a.rows(), c = a.cols(), w = end - begin;
  Array out(a.shape().size() <= 1 ? std::vector<std::size_t>{w} : std::vector<std::size_t>{n, w});
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(&a.value().data[i * c + begin], w, &out.data[i * w]);
  return make_op(std::move(out), {a}, [n, c, w, begin](Node& self) {
    auto& g = self.parents[0]->grad_buffer().data;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) g[i * c + begin + j] += self.grad.data[i * w + j];
  });
}

Tensor row(const Tensor& a, std::size_t r) {
  detail::require(r < a.rows(), "row: index out of range");
  const std::size_t c = a.cols();
  Array out({1, c});
  std::copy_n(&a.value().data[r * c], c, out.data.begin());
  return make_op(std::move(out), {a}, [r, c](Node& self) {
    auto& g = self.parents[0]->grad_buffer().data;
    for (std::size_t j = 0; j < c; ++j) g[r * c + j] += self.grad.data[j];
  });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  detail::require(!rows.empty(), "stack_rows: no inputs");
  const std::size_t c = rows[0].cols();
  for (const Tensor& t : rows) detail::require(t.rows() == 1 && t.cols() == c, "stack_rows: ragged rows");
  Array out({rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(rows[i].value().data.begin(), c, &out.data[i * c]);
  return make_op(std::move(out), std::vector<Tensor>(rows.begin(), rows.end()), [c](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      Node& p = *self.parents[i];
      if (!p.requires_grad) continue;
      auto& g = p.grad_buffer().data;
      for (std::size_t j = 0; j < c; ++j) g[j] += self.grad.data[i * c + j];
    }
  });
}

Tensor log_softmax(const Tensor& a) {
  const std::size_t n = a.rows(), c = a.cols();
  Array out(a.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const double> r(&a.value().data[i * c], c);
    const double lse = log_sum_exp(r);
    for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] = r[j] - lse;
  }
  return make_op(std::move(out), {a}, [n, c](Node& self) {
    auto& g = self.parents[0]->grad_buffer().data;
    for (std::size_t i = 0; i < n; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < c; ++j) gsum += self.grad.data[i * c + j];
      for (std::size_t j = 0; j < c; ++j) {
        g[i * c + j] += self.grad.data[i * c + j] - std::exp(self.value.data[i * c + j]) * gsum;
      }
    }
  });
}

}  // namespace vctc::ad
