#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "seqcheck/rng.hpp"

namespace seqcheck::diff {

using Shape = std::vector<long>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, only when requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // pulls this->grad into parents' grads

  long numel() const {
    long n = 1;
    for (long d : shape) n *= d;
    return n;
  }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

using NodePtr = std::shared_ptr<Node>;

// Value-semantics handle to a graph node. Graphs are built per forward pass;
// parameter tensors persist across passes and accumulate gradients.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double fill, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  long numel() const { return node_->numel(); }
  long dim(int i) const {
    const auto& s = node_->shape;
    return s[i < 0 ? s.size() + i : static_cast<std::size_t>(i)];
  }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& grad() { return node_->ensure_grad(), node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  double scalar() const;
  NodePtr node() const { return node_; }

 private:
  NodePtr node_;
};

// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
// reachable tensor with requires_grad set.
void backward(const Tensor& loss);

// ---- op suite ----
// Every op validates shapes (error names the op) and rejects non-finite
// outputs.

Tensor matmul(const Tensor& a, const Tensor& b);  // 2D x 2D, 3D x 3D, 3D x 2D
Tensor add(const Tensor& a, const Tensor& b);     // equal shapes, or b = trailing suffix
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);     // elementwise, equal shapes
Tensor affine(const Tensor& a, double mul, double add);  // mul * a + add
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh_act(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-8);
Tensor softmax(const Tensor& x);  // last axis
// Softmax over the last axis of [B, T, T] scores with entries j > i excluded;
// masked weights are exactly zero.
Tensor causal_masked_softmax(const Tensor& scores);
Tensor transpose_last2(const Tensor& x);
// [B, T, H] -> [B*heads, T, H/heads] and back.
Tensor split_heads(const Tensor& x, int heads);
Tensor merge_heads(const Tensor& x, int heads);
Tensor embedding(const Tensor& table, const std::vector<int>& ids, long batch, long len);
// Inverted dropout: keep with probability 1-p, scale kept values by 1/(1-p).
// Identity when training is false.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, long start, long len);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sum(const Tensor& x);  // scalar

// Mean negative log-softmax of the target logit over positions whose target
// differs from ignore_index. logits: [N, V] or [B, T, V].
Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& targets,
                            int ignore_index);

}  // namespace seqcheck::diff
