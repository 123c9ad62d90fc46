#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vxs/core/error.hpp"
#include "vxs/core/tensor.hpp"

namespace vxs::ad {

/// Reverse-mode autodiff over Tensor values. Graphs are built per
/// forward pass and dropped afterwards; nodes hold their parents via
/// shared_ptr, so releasing the output frees the whole tape.
struct Node {
  Tensor val;
  Tensor grad;
  bool requires_grad = false;
  bool has_grad = false;
  int64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (!has_grad) {
      grad = Tensor::zeros(val.shape);
      has_grad = true;
    }
  }
};

using NodePtr = std::shared_ptr<Node>;

inline int64_t next_node_id() {
  static std::atomic<int64_t> counter{0};
  return ++counter;
}

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : n_(std::move(n)) {}

  bool valid() const { return n_ != nullptr; }
  const Tensor& val() const { return n_->val; }
  Tensor& grad() const {
    n_->ensure_grad();
    return n_->grad;
  }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  const NodePtr& node() const { return n_; }
  double scalar() const {
    VXS_CHECK(n_->val.numel() == 1, InvalidInput, "Var is not scalar");
    return n_->val[0];
  }

 private:
  NodePtr n_;
};

inline Var leaf(Tensor t) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  n->requires_grad = true;
  n->id = next_node_id();
  return Var(std::move(n));
}

inline Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  n->requires_grad = false;
  n->id = next_node_id();
  return Var(std::move(n));
}

/// Create an op node. If no parent requires grad the node degenerates to a
/// constant and the tape below it is released immediately.
inline Var make_op(Tensor val, std::vector<Var> parents,
                   std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  n->id = next_node_id();
  bool need = false;
  for (const auto& p : parents) need = need || p.requires_grad();
  n->requires_grad = need;
  if (need) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(bw);
  }
  return Var(std::move(n));
}

/// Run reverse-mode accumulation from a scalar loss. Leaf gradients are
/// left on the nodes; repeated calls accumulate.
inline void backward(const Var& loss) {
  VXS_CHECK(loss.val().numel() == 1, InvalidInput, "backward needs a scalar loss");
  if (!loss.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{loss.node().get()};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](Node* a, Node* b) { return a->id > b->id; });

  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (Node* n : order) {
    if (n->backward && n->has_grad) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise / reduction ops

inline Var add(const Var& a, const Var& b) {
  VXS_CHECK(a.val().same_shape(b.val()), InvalidInput, "add: shape mismatch");
  Tensor out = a.val();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += b.val()[i];
  return make_op(std::move(out), {a, b}, [a, b](Node& n) {
    if (a.requires_grad()) {
      auto& g = a.grad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    }
    if (b.requires_grad()) {
      auto& g = b.grad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  VXS_CHECK(a.val().same_shape(b.val()), InvalidInput, "sub: shape mismatch");
  Tensor out = a.val();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b.val()[i];
  return make_op(std::move(out), {a, b}, [a, b](Node& n) {
    if (a.requires_grad()) {
      auto& g = a.grad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    }
    if (b.requires_grad()) {
      auto& g = b.grad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] -= n.grad[i];
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  VXS_CHECK(a.val().same_shape(b.val()), InvalidInput, "mul: shape mismatch");
  Tensor out = a.val();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b.val()[i];
  return make_op(std::move(out), {a, b}, [a, b](Node& n) {
    if (a.requires_grad()) {
      auto& g = a.grad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * b.val()[i];
    }
    if (b.requires_grad()) {
      auto& g = b.grad();
      for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * a.val()[i];
    }
  });
}

inline Var scale(const Var& a, double s) {
  Tensor out = a.val();
  for (auto& v : out.data) v *= s;
  return make_op(std::move(out), {a}, [a, s](Node& n) {
    auto& g = a.grad();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * s;
  });
}

inline Var relu(const Var& a) {
  Tensor out = a.val();
  for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
  return make_op(std::move(out), {a}, [a](Node& n) {
    auto& g = a.grad();
    for (int64_t i = 0; i < g.numel(); ++i)
      if (a.val()[i] > 0.0) g[i] += n.grad[i];
  });
}

inline double softplus_fn(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

inline double sigmoid_fn(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var softplus(const Var& a) {
  Tensor out = a.val();
  for (auto& v : out.data) v = softplus_fn(v);
  return make_op(std::move(out), {a}, [a](Node& n) {
    auto& g = a.grad();
    for (int64_t i = 0; i < g.numel(); ++i)
      g[i] += n.grad[i] * sigmoid_fn(a.val()[i]);
  });
}

inline Var sigmoid(const Var& a) {
  Tensor out = a.val();
  for (auto& v : out.data) v = sigmoid_fn(v);
  return make_op(std::move(out), {a}, [a](Node& n) {
    auto& g = a.grad();
    const Tensor& y = n.val;
    for (int64_t i = 0; i < g.numel(); ++i)
      g[i] += n.grad[i] * y[i] * (1.0 - y[i]);
  });
}

inline Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.val().data) s += v;
  return make_op(Tensor::scalar(s), {a}, [a](Node& n) {
    auto& g = a.grad();
    double go = n.grad[0];
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += go;
  });
}

inline Var mean(const Var& a) {
  int64_t cnt = a.val().numel();
  VXS_CHECK(cnt > 0, InvalidInput, "mean of empty tensor");
  double s = 0.0;
  for (double v : a.val().data) s += v;
  s /= static_cast<double>(cnt);
  return make_op(Tensor::scalar(s), {a}, [a, cnt](Node& n) {
    auto& g = a.grad();
    double go = n.grad[0] / static_cast<double>(cnt);
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += go;
  });
}

inline Var reshape(const Var& a, std::vector<int> shape) {
  VXS_CHECK(Tensor::numel_of(shape) == a.val().numel(), InvalidInput,
            "reshape: element count mismatch");
  Tensor out(std::move(shape), a.val().data);
  return make_op(std::move(out), {a}, [a](Node& n) {
    auto& g = a.grad();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
  });
}

/// Mean squared error between two same-shape tensors.
inline Var mse(const Var& a, const Var& b) {
  VXS_CHECK(a.val().same_shape(b.val()), InvalidInput, "mse: shape mismatch");
  int64_t cnt = a.val().numel();
  double s = 0.0;
  for (int64_t i = 0; i < cnt; ++i) {
    double d = a.val()[i] - b.val()[i];
    s += d * d;
  }
  s /= static_cast<double>(cnt);
  return make_op(Tensor::scalar(s), {a, b}, [a, b, cnt](Node& n) {
    double go = 2.0 * n.grad[0] / static_cast<double>(cnt);
    if (a.requires_grad()) {
      auto& g = a.grad();
      for (int64_t i = 0; i < cnt; ++i) g[i] += go * (a.val()[i] - b.val()[i]);
    }
    if (b.requires_grad()) {
      auto& g = b.grad();
      for (int64_t i = 0; i < cnt; ++i) g[i] -= go * (a.val()[i] - b.val()[i]);
    }
  });
}

}  // namespace vxs::ad
