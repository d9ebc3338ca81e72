#include "manifest/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "manifest/kernels.hpp"

namespace manifest {
namespace {

thread_local bool t_grad_enabled = true;

using BackwardFn = std::function<void(Node&)>;

// Wraps a forward value into a graph node; records the backward closure only
// when some input participates in differentiation.
Var make_result(Tensor value, std::initializer_list<const Var*> inputs, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (!t_grad_enabled) return Var(node);
  bool needs = false;
  for (const Var* v : inputs) needs = needs || (v->defined() && v->requires_grad());
  if (!needs) return Var(node);
  node->requires_grad = true;
  for (const Var* v : inputs) node->parents.push_back(v->defined() ? v->node() : nullptr);
  node->backward_fn = std::move(fn);
  return Var(node);
}

Var make_result_list(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (!t_grad_enabled) return Var(node);
  const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); });
  if (!needs) return Var(node);
  node->requires_grad = true;
  for (const auto& v : inputs) node->parents.push_back(v.node());
  node->backward_fn = std::move(fn);
  return Var(node);
}

// Gradient slot of parent i, or null when that parent needs no gradient.
Tensor* slot(Node& self, std::size_t i) {
  auto& p = self.parents[i];
  if (!p || !p->requires_grad) return nullptr;
  return &p->ensure_grad();
}

void require_same_shape(const Var& a, const Var& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank(const Var& x, int rank, const char* what) {
  if (x.value().rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(x.shape()));
  }
}

template <typename F>
Var unary(const Var& x, F&& forward_and_derivative) {
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  Tensor d(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) forward_and_derivative(xv[i], y[i], d[i]);
  return make_result(std::move(y), {&x}, [d = std::move(d)](Node& self) {
    if (Tensor* g = slot(self, 0)) {
      for (std::size_t i = 0; i < d.numel(); ++i) (*g)[i] += self.grad[i] * d[i];
    }
  });
}

}  // namespace

Tensor& Node::ensure_grad() {
  if (grad.empty() && !value.empty()) grad = Tensor(value.shape());
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
  if (!node_) return {};
  if (node_->grad.empty()) return Tensor(node_->value.shape());
  return node_->grad;
}

void Var::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.fill(0.0f);
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void backward(const Var& loss) {
  if (!loss.defined() || loss.value().numel() != 1) {
    throw DimensionError("backward() requires a single-element loss");
  }
  if (!loss.requires_grad()) return;
  // Iterative post-order DFS gives a topological order. The order owns its
  // nodes because releasing a node below can drop the last other reference.
  std::vector<std::shared_ptr<Node>> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack{{loss.node(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      std::shared_ptr<Node> p = top.first->parents[top.second++];
      if (p && p->requires_grad && !p->is_leaf() && visited.insert(p.get()).second) stack.emplace_back(std::move(p), 0);
      continue;
    }
    order.push_back(std::move(top.first));
    stack.pop_back();
  }
  loss.node()->ensure_grad()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = it->get();
    if (n->is_leaf()) continue;
    if (!n->grad.empty()) n->backward_fn(*n);
    // Release the graph behind this node.
    n->backward_fn = nullptr;
    n->parents.clear();
    n->grad = Tensor();
    n->requires_grad = false;
  }
}

namespace op {

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += b.value()[i];
  return make_result(std::move(y), {&a, &b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (Tensor* g = slot(self, k)) {
        for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] -= b.value()[i];
  return make_result(std::move(y), {&a, &b}, [](Node& self) {
    if (Tensor* g = slot(self, 0)) {
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i];
    }
    if (Tensor* g = slot(self, 1)) {
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= b.value()[i];
  return make_result(std::move(y), {&a, &b}, [](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    if (Tensor* g = slot(self, 0)) {
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i] * bv[i];
    }
    if (Tensor* g = slot(self, 1)) {
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, float s) {
  Tensor y = a.value();
  for (auto& v : y.vec()) v *= s;
  return make_result(std::move(y), {&a}, [s](Node& self) {
    if (Tensor* g = slot(self, 0)) {
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += s * self.grad[i];
    }
  });
}

Var add_scalar(const Var& a, float s) {
  Tensor y = a.value();
  for (auto& v : y.vec()) v += s;
  return make_result(std::move(y), {&a}, [](Node& self) {
    if (Tensor* g = slot(self, 0)) {
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

Var mul_scalar(const Var& x, const Var& s) {
  if (s.value().numel() != 1) throw DimensionError("mul_scalar: scalar operand has shape " + shape_str(s.shape()));
  const float sv = s.value()[0];
  Tensor y = x.value();
  for (auto& v : y.vec()) v *= sv;
  return make_result(std::move(y), {&x, &s}, [](Node& self) {
    const Tensor& xv = self.parents[0]->value;
    const float sv = self.parents[1]->value[0];
    if (Tensor* g = slot(self, 0)) {
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += sv * self.grad[i];
    }
    if (Tensor* g = slot(self, 1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < xv.numel(); ++i) acc += static_cast<double>(xv[i]) * self.grad[i];
      (*g)[0] += static_cast<float>(acc);
    }
  });
}

Var relu(const Var& x) {
  return unary(x, [](float v, float& y, float& d) {
    y = v > 0.0f ? v : 0.0f;
    d = v > 0.0f ? 1.0f : 0.0f;
  });
}

Var leaky_relu(const Var& x, float slope) {
  return unary(x, [slope](float v, float& y, float& d) {
    y = v > 0.0f ? v : slope * v;
    d = v > 0.0f ? 1.0f : slope;
  });
}

Var tanh(const Var& x) {
  return unary(x, [](float v, float& y, float& d) {
    y = std::tanh(v);
    d = 1.0f - y * y;
  });
}

Var clamp(const Var& x, float lo, float hi) {
  return unary(x, [lo, hi](float v, float& y, float& d) {
    y = std::clamp(v, lo, hi);
    d = (v > lo && v < hi) ? 1.0f : 0.0f;
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  require_rank(x, 4, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  kernels::ConvGeometry g;
  g.batch = x.dim(0);
  g.in_channels = x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.out_channels = w.dim(0);
  g.kernel = w.dim(2);
  g.stride = stride;
  g.pad = pad;
  if (w.dim(1) != g.in_channels || w.dim(3) != g.kernel) {
    throw DimensionError("conv2d: weight " + shape_str(w.shape()) + " incompatible with input " +
                         shape_str(x.shape()));
  }
  if (b.defined() && b.value().numel() != static_cast<std::size_t>(g.out_channels)) {
    throw DimensionError("conv2d: bias size mismatch");
  }
  if (g.height + 2 * pad < g.kernel || g.width + 2 * pad < g.kernel) {
    throw DimensionError("conv2d: kernel larger than padded input " + shape_str(x.shape()));
  }
  Tensor y({g.batch, g.out_channels, g.out_height(), g.out_width()});
  if (g.batch > 0) {
    kernels::conv2d_forward(g, x.value().data(), w.value().data(), b.defined() ? b.value().data() : nullptr, y.data());
  }
  return make_result(std::move(y), {&x, &w, &b}, [g](Node& self) {
    if (g.batch == 0) return;
    Tensor* gx = slot(self, 0);
    Tensor* gw = slot(self, 1);
    Tensor* gb = self.parents[2] ? slot(self, 2) : nullptr;
    Tensor scratch_w;
    if (!gw) {
      scratch_w = Tensor(self.parents[1]->value.shape());
      gw = &scratch_w;
    }
    kernels::conv2d_backward(g, self.parents[0]->value.data(), self.parents[1]->value.data(), self.grad.data(),
                             gx ? gx->data() : nullptr, gw->data(), gb ? gb->data() : nullptr);
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require_rank(x, 2, "linear input");
  require_rank(w, 2, "linear weight");
  const int n = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (w.dim(1) != in) throw DimensionError("linear: weight " + shape_str(w.shape()) + " vs input " + shape_str(x.shape()));
  Tensor y({n, out});
  if (n > 0) {
    for (int i = 0; i < n; ++i) std::copy(b.value().data(), b.value().data() + out, y.data() + i * out);
    kernels::gemm(false, true, n, out, in, x.value().data(), in, w.value().data(), in, y.data(), out, true);
  }
  return make_result(std::move(y), {&x, &w, &b}, [n, in, out](Node& self) {
    if (n == 0) return;
    const float* gy = self.grad.data();
    if (Tensor* gx = slot(self, 0)) {
      kernels::gemm(false, false, n, in, out, gy, out, self.parents[1]->value.data(), in, gx->data(), in, true);
    }
    if (Tensor* gw = slot(self, 1)) {
      kernels::gemm(true, false, out, in, n, gy, out, self.parents[0]->value.data(), in, gw->data(), in, true);
    }
    if (Tensor* gb = slot(self, 2)) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < out; ++j) (*gb)[j] += gy[i * out + j];
    }
  });
}

namespace {

// Shared body of instance_norm / adain / layer_norm: groups of contiguous
// elements normalized and scaled by per-group gamma and beta.
Var group_norm_affine(const Var& x, const Var& gamma, const Var& beta, int groups, int group_size) {
  const Tensor& xv = x.value();
  auto stats = std::make_shared<std::pair<std::vector<float>, std::vector<float>>>();
  stats->first.resize(groups);
  stats->second.resize(groups);
  Tensor y(xv.shape());
  if (groups > 0 && group_size > 0) {
    kernels::group_moments(groups, group_size, xv.data(), stats->first.data(), stats->second.data());
    kernels::group_normalize_affine(groups, group_size, xv.data(), stats->first.data(), stats->second.data(),
                                    gamma.value().data(), beta.value().data(), op::kNormEps, y.data());
  }
  return make_result(std::move(y), {&x, &gamma, &beta}, [stats, groups, group_size](Node& self) {
    if (groups == 0 || group_size == 0) return;
    Tensor* gx = slot(self, 0);
    Tensor* gg = slot(self, 1);
    Tensor* gbeta = slot(self, 2);
    Tensor scratch;
    if (!gx) {
      scratch = Tensor(self.value.shape());
      gx = &scratch;
    }
    kernels::group_normalize_affine_backward(groups, group_size, self.parents[0]->value.data(), stats->first.data(),
                                             stats->second.data(), self.parents[1]->value.data(), self.grad.data(),
                                             op::kNormEps, gx->data(), gg ? gg->data() : nullptr,
                                             gbeta ? gbeta->data() : nullptr);
  });
}

}  // namespace

Var instance_norm(const Var& x) {
  require_rank(x, 4, "instance_norm");
  const int groups = x.dim(0) * x.dim(1);
  Var ones(Tensor::ones({groups}));
  Var zeros(Tensor::zeros({groups}));
  return group_norm_affine(x, ones, zeros, groups, x.dim(2) * x.dim(3));
}

Var adain(const Var& x, const Var& gamma, const Var& beta) {
  require_rank(x, 4, "adain");
  const int groups = x.dim(0) * x.dim(1);
  const Shape expect{x.dim(0), x.dim(1)};
  if (gamma.shape() != expect || beta.shape() != expect) {
    throw DimensionError("adain: affine parameters " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                         " do not match features " + shape_str(x.shape()));
  }
  return group_norm_affine(x, gamma, beta, groups, x.dim(2) * x.dim(3));
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta) {
  require_rank(x, 4, "layer_norm");
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.value().numel() != static_cast<std::size_t>(c) || beta.value().numel() != static_cast<std::size_t>(c)) {
    throw DimensionError("layer_norm: affine size mismatch");
  }
  Var ones(Tensor::ones({n}));
  Var zeros(Tensor::zeros({n}));
  Var normalized = group_norm_affine(x, ones, zeros, n, c * hw);
  Tensor y = normalized.value();
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      float* p = y.data() + (static_cast<long>(i) * c + ch) * hw;
      const float gm = gamma.value()[ch], bt = beta.value()[ch];
      for (int k = 0; k < hw; ++k) p[k] = gm * p[k] + bt;
    }
  return make_result(std::move(y), {&normalized, &gamma, &beta}, [n, c, hw](Node& self) {
    const Tensor& xn = self.parents[0]->value;
    const Tensor& gm = self.parents[1]->value;
    Tensor* gx = slot(self, 0);
    Tensor* gg = slot(self, 1);
    Tensor* gb = slot(self, 2);
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const long off = (static_cast<long>(i) * c + ch) * hw;
        double sg = 0.0, sb = 0.0;
        for (int k = 0; k < hw; ++k) {
          const float g = self.grad[off + k];
          if (gx) (*gx)[off + k] += g * gm[ch];
          sg += static_cast<double>(g) * xn[off + k];
          sb += g;
        }
        if (gg) (*gg)[ch] += static_cast<float>(sg);
        if (gb) (*gb)[ch] += static_cast<float>(sb);
      }
  });
}

Var upsample2x(const Var& x) {
  require_rank(x, 4, "upsample2x");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor y({n, c, 2 * h, 2 * w});
  const Tensor& xv = x.value();
  for (int p = 0; p < n * c; ++p)
    for (int i = 0; i < 2 * h; ++i)
      for (int j = 0; j < 2 * w; ++j)
        y[(static_cast<long>(p) * 2 * h + i) * 2 * w + j] = xv[(static_cast<long>(p) * h + i / 2) * w + j / 2];
  return make_result(std::move(y), {&x}, [n, c, h, w](Node& self) {
    if (Tensor* g = slot(self, 0)) {
      for (int p = 0; p < n * c; ++p)
        for (int i = 0; i < 2 * h; ++i)
          for (int j = 0; j < 2 * w; ++j)
            (*g)[(static_cast<long>(p) * h + i / 2) * w + j / 2] += self.grad[(static_cast<long>(p) * 2 * h + i) * 2 * w + j];
    }
  });
}

Var avg_pool2x(const Var& x) {
  require_rank(x, 4, "avg_pool2x");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2) / 2, w = x.dim(3) / 2;
  if (x.dim(2) % 2 || x.dim(3) % 2) throw DimensionError("avg_pool2x: odd spatial size " + shape_str(x.shape()));
  Tensor y({n, c, h, w});
  const Tensor& xv = x.value();
  const int iw = 2 * w;
  for (int p = 0; p < n * c; ++p)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const float* src = xv.data() + (static_cast<long>(p) * 2 * h + 2 * i) * iw + 2 * j;
        y[(static_cast<long>(p) * h + i) * w + j] = 0.25f * (src[0] + src[1] + src[iw] + src[iw + 1]);
      }
  return make_result(std::move(y), {&x}, [n, c, h, w](Node& self) {
    if (Tensor* g = slot(self, 0)) {
      const int iw = 2 * w;
      for (int p = 0; p < n * c; ++p)
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j) {
            const float q = 0.25f * self.grad[(static_cast<long>(p) * h + i) * w + j];
            float* dst = g->data() + (static_cast<long>(p) * 2 * h + 2 * i) * iw + 2 * j;
            dst[0] += q;
            dst[1] += q;
            dst[iw] += q;
            dst[iw + 1] += q;
          }
    }
  });
}

Var global_avg_pool(const Var& x) {
  require_rank(x, 4, "global_avg_pool");
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor y({n, c});
  for (int p = 0; p < n * c; ++p) {
    double s = 0.0;
    for (int k = 0; k < hw; ++k) s += x.value()[static_cast<long>(p) * hw + k];
    y[p] = static_cast<float>(s / hw);
  }
  return make_result(std::move(y), {&x}, [n, c, hw](Node& self) {
    if (Tensor* g = slot(self, 0)) {
      for (int p = 0; p < n * c; ++p) {
        const float q = self.grad[p] / hw;
        for (int k = 0; k < hw; ++k) (*g)[static_cast<long>(p) * hw + k] += q;
      }
    }
  });
}

std::pair<Var, Var> channel_stats(const Var& x, float eps) {
  require_rank(x, 4, "channel_stats");
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor mean({n, c});
  Tensor stddev({n, c});
  const Tensor& xv = x.value();
  for (int p = 0; p < n * c; ++p) {
    const float* src = xv.data() + static_cast<long>(p) * hw;
    double s = 0.0;
    for (int k = 0; k < hw; ++k) s += src[k];
    const double m = s / hw;
    double sq = 0.0;
    for (int k = 0; k < hw; ++k) sq += (src[k] - m) * (src[k] - m);
    mean[p] = static_cast<float>(m);
    stddev[p] = static_cast<float>(std::sqrt(sq / hw + eps));
  }
  Var mean_var = make_result(std::move(mean), {&x}, [hw](Node& self) {
    if (Tensor* g = slot(self, 0)) {
      for (std::size_t p = 0; p < self.value.numel(); ++p) {
        const float q = self.grad[p] / hw;
        for (int k = 0; k < hw; ++k) (*g)[p * hw + k] += q;
      }
    }
  });
  Var std_var = make_result(std::move(stddev), {&x, &mean_var}, [hw](Node& self) {
    if (Tensor* g = slot(self, 0)) {
      const Tensor& xv = self.parents[0]->value;
      const Tensor& mv = self.parents[1]->value;
      for (std::size_t p = 0; p < self.value.numel(); ++p) {
        const double q = self.grad[p] / (static_cast<double>(hw) * self.value[p]);
        for (int k = 0; k < hw; ++k) (*g)[p * hw + k] += static_cast<float>(q * (xv[p * hw + k] - mv[p]));
      }
    }
  });
  return {mean_var, std_var};
}

Var mean_rows(const Var& x) {
  require_rank(x, 2, "mean_rows");
  const int n = x.dim(0), d = x.dim(1);
  if (n == 0) throw DimensionError("mean_rows of an empty batch");
  Tensor y({1, d});
  for (int j = 0; j < d; ++j) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += x.value()[static_cast<long>(i) * d + j];
    y[j] = static_cast<float>(s / n);
  }
  return make_result(std::move(y), {&x}, [n, d](Node& self) {
    if (Tensor* g = slot(self, 0)) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) (*g)[static_cast<long>(i) * d + j] += self.grad[j] / n;
    }
  });
}

Var repeat_rows(const Var& x, int n) {
  require_rank(x, 2, "repeat_rows");
  if (x.dim(0) != 1) throw DimensionError("repeat_rows expects a single row, got " + shape_str(x.shape()));
  const int d = x.dim(1);
  Tensor y({n, d});
  for (int i = 0; i < n; ++i) std::copy(x.value().data(), x.value().data() + d, y.data() + static_cast<long>(i) * d);
  return make_result(std::move(y), {&x}, [n, d](Node& self) {
    if (Tensor* g = slot(self, 0)) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) (*g)[j] += self.grad[static_cast<long>(i) * d + j];
    }
  });
}

Var slice_cols(const Var& x, int begin, int end) {
  require_rank(x, 2, "slice_cols");
  const int n = x.dim(0), d = x.dim(1);
  if (begin < 0 || end > d || begin > end) throw DimensionError("slice_cols out of range for " + shape_str(x.shape()));
  const int w = end - begin;
  Tensor y({n, w});
  for (int i = 0; i < n; ++i)
    std::copy(x.value().data() + static_cast<long>(i) * d + begin, x.value().data() + static_cast<long>(i) * d + end,
              y.data() + static_cast<long>(i) * w);
  return make_result(std::move(y), {&x}, [n, d, begin, w](Node& self) {
    if (Tensor* g = slot(self, 0)) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < w; ++j) (*g)[static_cast<long>(i) * d + begin + j] += self.grad[static_cast<long>(i) * w + j];
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of zero tensors");
  const int n = parts[0].dim(0);
  int total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != n) throw DimensionError("concat_cols row mismatch");
    total += p.dim(1);
  }
  Tensor y({n, total});
  int off = 0;
  std::vector<int> offsets;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const int w = p.dim(1);
    for (int i = 0; i < n; ++i)
      std::copy(p.value().data() + static_cast<long>(i) * w, p.value().data() + static_cast<long>(i + 1) * w,
                y.data() + static_cast<long>(i) * total + off);
    off += w;
  }
  return make_result_list(std::move(y), parts, [n, total, offsets](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Tensor* g = slot(self, k);
      if (!g) continue;
      const int w = self.parents[k]->value.dim(1);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < w; ++j) (*g)[static_cast<long>(i) * w + j] += self.grad[static_cast<long>(i) * total + offsets[k] + j];
    }
  });
}

Var select_channel(const Var& x, int c) {
  require_rank(x, 4, "select_channel");
  const int n = x.dim(0), ch = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (c < 0 || c >= ch) throw DimensionError("select_channel index out of range");
  Tensor y({n, 1, x.dim(2), x.dim(3)});
  for (int i = 0; i < n; ++i)
    std::copy(x.value().data() + (static_cast<long>(i) * ch + c) * hw,
              x.value().data() + (static_cast<long>(i) * ch + c + 1) * hw, y.data() + static_cast<long>(i) * hw);
  return make_result(std::move(y), {&x}, [n, ch, hw, c](Node& self) {
    if (Tensor* g = slot(self, 0)) {
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < hw; ++k) (*g)[(static_cast<long>(i) * ch + c) * hw + k] += self.grad[static_cast<long>(i) * hw + k];
    }
  });
}

Var slice_batch(const Var& x, int begin, int end) {
  Tensor y = x.value().slice_batch(begin, end);
  const std::size_t off = x.value().dim(0) ? x.value().numel() / x.value().dim(0) * begin : 0;
  return make_result(std::move(y), {&x}, [off](Node& self) {
    if (Tensor* g = slot(self, 0)) {
      for (std::size_t i = 0; i < self.grad.numel(); ++i) (*g)[off + i] += self.grad[i];
    }
  });
}

Var concat_batch(const std::vector<Var>& parts) {
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (const auto& p : parts) values.push_back(p.value());
  Tensor y = Tensor::concat_batch(values);
  return make_result_list(std::move(y), parts, [](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      const std::size_t cnt = self.parents[k]->value.numel();
      if (Tensor* g = slot(self, k)) {
        for (std::size_t i = 0; i < cnt; ++i) (*g)[i] += self.grad[off + i];
      }
      off += cnt;
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return make_result(std::move(y), {&x}, [](Node& self) {
    if (Tensor* g = slot(self, 0)) {
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

namespace {

// Source coordinate in the crop for output (i, j) after clockwise rotation.
std::pair<int, int> rotated_source(int i, int j, int turns, int size) {
  switch (turns & 3) {
    case 1:
      return {size - 1 - j, i};
    case 2:
      return {size - 1 - i, size - 1 - j};
    case 3:
      return {j, size - 1 - i};
    default:
      return {i, j};
  }
}

}  // namespace

Var crop_rotate(const Var& x, int n, int top, int left, int size, int quarter_turns) {
  require_rank(x, 4, "crop_rotate");
  const int c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (n < 0 || n >= x.dim(0) || top < 0 || left < 0 || top + size > h || left + size > w || size <= 0) {
    throw DimensionError("crop_rotate window out of range for " + shape_str(x.shape()));
  }
  std::vector<long> src(static_cast<std::size_t>(c) * size * size);
  Tensor y({1, c, size, size});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j) {
        const auto [si, sj] = rotated_source(i, j, quarter_turns, size);
        const long s = ((static_cast<long>(n) * c + ch) * h + top + si) * w + left + sj;
        const long d = (static_cast<long>(ch) * size + i) * size + j;
        src[d] = s;
        y[d] = x.value()[s];
      }
  return make_result(std::move(y), {&x}, [src = std::move(src)](Node& self) {
    if (Tensor* g = slot(self, 0)) {
      for (std::size_t d = 0; d < src.size(); ++d) (*g)[src[d]] += self.grad[d];
    }
  });
}

Var softmax(const Var& logits) {
  const Tensor& l = logits.value();
  if (l.rank() != 1 || l.numel() == 0) throw DimensionError("softmax expects a non-empty vector");
  Tensor y(l.shape());
  const float mx = *std::max_element(l.vec().begin(), l.vec().end());
  double z = 0.0;
  for (std::size_t i = 0; i < l.numel(); ++i) z += std::exp(static_cast<double>(l[i]) - mx);
  for (std::size_t i = 0; i < l.numel(); ++i) y[i] = static_cast<float>(std::exp(static_cast<double>(l[i]) - mx) / z);
  return make_result(std::move(y), {&logits}, [](Node& self) {
    if (Tensor* g = slot(self, 0)) {
      double dot = 0.0;
      for (std::size_t i = 0; i < self.value.numel(); ++i) dot += static_cast<double>(self.grad[i]) * self.value[i];
      for (std::size_t i = 0; i < self.value.numel(); ++i) (*g)[i] += static_cast<float>(self.value[i] * (self.grad[i] - dot));
    }
  });
}

Var index(const Var& v, int i) {
  if (i < 0 || static_cast<std::size_t>(i) >= v.value().numel()) throw DimensionError("index out of range");
  Tensor y({1}, v.value()[i]);
  return make_result(std::move(y), {&v}, [i](Node& self) {
    if (Tensor* g = slot(self, 0)) (*g)[i] += self.grad[0];
  });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (float v : x.value().vec()) s += v;
  return make_result(Tensor({1}, static_cast<float>(s)), {&x}, [](Node& self) {
    if (Tensor* g = slot(self, 0)) {
      for (auto& v : g->vec()) v += self.grad[0];
    }
  });
}

Var mean(const Var& x) {
  const std::size_t n = x.value().numel();
  if (n == 0) throw DimensionError("mean of an empty tensor");
  double s = 0.0;
  for (float v : x.value().vec()) s += v;
  return make_result(Tensor({1}, static_cast<float>(s / n)), {&x}, [n](Node& self) {
    if (Tensor* g = slot(self, 0)) {
      const float q = self.grad[0] / static_cast<float>(n);
      for (auto& v : g->vec()) v += q;
    }
  });
}

Var l1_mean(const Var& a, const Var& b) {
  require_same_shape(a, b, "l1_mean");
  const std::size_t n = a.value().numel();
  if (n == 0) throw DimensionError("l1_mean of empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::fabs(a.value()[i] - b.value()[i]);
  return make_result(Tensor({1}, static_cast<float>(s / n)), {&a, &b}, [n](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    const float q = self.grad[0] / static_cast<float>(n);
    Tensor* ga = slot(self, 0);
    Tensor* gb = slot(self, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const float d = av[i] - bv[i];
      const float sgn = d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f);
      if (ga) (*ga)[i] += q * sgn;
      if (gb) (*gb)[i] -= q * sgn;
    }
  });
}

Var mse_to_constant(const Var& x, float target) {
  const std::size_t n = x.value().numel();
  if (n == 0) throw DimensionError("mse_to_constant of an empty tensor");
  double s = 0.0;
  for (float v : x.value().vec()) s += (static_cast<double>(v) - target) * (static_cast<double>(v) - target);
  return make_result(Tensor({1}, static_cast<float>(s / n)), {&x}, [n, target](Node& self) {
    if (Tensor* g = slot(self, 0)) {
      const float q = 2.0f * self.grad[0] / static_cast<float>(n);
      for (std::size_t i = 0; i < n; ++i) (*g)[i] += q * (self.parents[0]->value[i] - target);
    }
  });
}

Var l2_norm(const Var& x) {
  double s = 0.0;
  for (float v : x.value().vec()) s += static_cast<double>(v) * v;
  const float norm = static_cast<float>(std::sqrt(s));
  return make_result(Tensor({1}, norm), {&x}, [](Node& self) {
    Tensor* g = slot(self, 0);
    const float norm = self.value[0];
    if (!g || norm == 0.0f) return;
    const float q = self.grad[0] / norm;
    for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += q * self.parents[0]->value[i];
  });
}

}  // namespace op
}  // namespace manifest
