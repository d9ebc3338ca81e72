#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "manifest/tensor.hpp"

namespace manifest {

struct Node {
  Tensor value;
  Tensor grad;  // lazily allocated, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  Tensor& ensure_grad();
};

// Handle to a node of the reverse-mode graph. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int i) const { return node_->value.dim(i); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  // Gradient accumulated by backward(); zeros when nothing flowed here.
  Tensor grad() const;
  Tensor& mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  // Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Backpropagates from a single-element tensor. Gradients accumulate into
// leaves; the intermediate graph is released afterwards.
void backward(const Var& loss);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace op {

constexpr float kNormEps = 1e-5f;

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float s);
Var add_scalar(const Var& a, float s);
// x * s where s holds a single element.
Var mul_scalar(const Var& x, const Var& s);

Var relu(const Var& x);
Var leaky_relu(const Var& x, float slope);
Var tanh(const Var& x);
// Gradient passes only where lo < x < hi.
Var clamp(const Var& x, float lo, float hi);

// x: (N,Cin,H,W), w: (Cout,Cin,k,k), b: (Cout) or undefined.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// x: (N,in), w: (out,in), b: (out).
Var linear(const Var& x, const Var& w, const Var& b);

// Per-(n,c) normalization without affine parameters.
Var instance_norm(const Var& x);
// gamma, beta: (N,C). y = gamma * (x - mean) / (std + eps) + beta per plane.
Var adain(const Var& x, const Var& gamma, const Var& beta);
// Normalizes each sample over (C,H,W) then applies per-channel gamma, beta: (C).
Var layer_norm(const Var& x, const Var& gamma, const Var& beta);

Var upsample2x(const Var& x);
Var avg_pool2x(const Var& x);
Var global_avg_pool(const Var& x);  // (N,C,H,W) -> (N,C)

// Per-(n,c) spatial mean and sqrt(var + eps), each (N,C).
std::pair<Var, Var> channel_stats(const Var& x, float eps = kNormEps);

Var mean_rows(const Var& x);            // (N,D) -> (1,D)
Var repeat_rows(const Var& x, int n);   // (1,D) -> (n,D)
Var slice_cols(const Var& x, int begin, int end);
Var concat_cols(const std::vector<Var>& parts);
Var select_channel(const Var& x, int c);  // (N,C,H,W) -> (N,1,H,W)
Var slice_batch(const Var& x, int begin, int end);
Var concat_batch(const std::vector<Var>& parts);
Var reshape(const Var& x, Shape shape);

// size x size window of sample n at (top, left), rotated clockwise by
// quarter_turns * 90 degrees. Result: (1,C,size,size).
Var crop_rotate(const Var& x, int n, int top, int left, int size, int quarter_turns);

Var softmax(const Var& logits);   // 1-D
Var index(const Var& v, int i);   // element i as shape {1}

Var sum(const Var& x);
Var mean(const Var& x);
Var l1_mean(const Var& a, const Var& b);           // mean |a - b|
Var mse_to_constant(const Var& x, float target);   // mean (x - target)^2
// Euclidean norm; gradient is taken as zero at the origin.
Var l2_norm(const Var& x);

}  // namespace op
}  // namespace manifest
